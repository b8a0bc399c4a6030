"""The reference manual's example listings must parse as printed.

Where a listing is a fragment, it is completed to a full program (allocations
for free variables, the statement terminator the grammar requires) without
touching the statements themselves. The original communication listings are
included verbatim even where their physics is corrected in corpus/ — they
still have to get through the grammar.
"""
import pytest

from cqpl import parse

IDENTIFIERS = """\
new int loop := 10;
new qbit b1 := 1;
loop := loop - 1;
"""

PROCEDURES = """\
proc test: a:int, b:bit, c:float, d:qbit {
  skip;
} in {
  new int a0 := 0;
  new bit a1 := 0;
  new float a2 := 0.0;
  new qbit b1 := 0;
  new int eins := 0;
  new bit zwei := 0;
  new float drei := 0.0;
  (eins, zwei, drei) := call test(a0, a1, a2, b1);
  call test(a0, a1, a2, b1);
};
"""

GATES = """\
new qbit q := 0;
q *= Not;
new qbit test1 := 0;
new qbit test2 := 1;
test1, test2 *= CNot;
test1 *= Phase 0.5;
test1,test2 *= [[0.5,  0.5,   0.5,  0.5,
                 0.5,  0.5i, -0.5, -0.5i,
                 0.5, -0.5,   0.5, -0.5,
                 0.5, -0.5i, -0.5,  0.5i]];
"""

CONTROL_FLOW = """\
new int loop := 10;
while (loop > 5) do {
    print loop;
    loop := loop - 1;
};

if (loop = 3) then {
    print "3";
}
else {
    print "Nicht 3";
};
"""

DUMP_FRAGMENT = """\
new qbit a := 0;
new qbit b := 0;
print "State before FT:"; dump a, b;
a, b *= FT(2);
print "State after FT:";  dump a, b;
measure a then { print "a is |0>"; } else { print "a is |1>"; };
print "State of b:";  dump b;
print "State of (a,b):"; dump a,b;
"""

COIN_TOSS = """\
new qbit q := 0;
q *= H;
measure q then { print "Tossed head"; } else { print "Tossed tail"; };
"""

EPR_ORIGINAL = """\
module Alice {
  proc createEPR: a:qbit, b:qbit {
       b *= Not;
       b *= H;
       a,b *= CNot;
  } in {
    new qbit first := 0;
    new qbit second := 0;
    call createEPR(first, second);
    send second to Bob;
    measure first then { print "Alice's qbit is |1>"; }
                  else { print "Alice's qbit is |0>"; };
  };
};

module Bob {
   receive q:qbit from Alice;
   measure q then { print "Bob's qbit is |1>"; }
             else { print "Bob's qbit is |0>"; };
};
"""

TELEPORT_ORIGINAL = """\
module Alice {
   proc createEPR: a:qbit, b:qbit {
      a *= H;
      b,a *= CNot;  /* b: Control, a: Target */
   } in {
     new qbit teleport := 0;  /* Apply unitary operations to set the qbit
                                 to any other desired state */
     new qbit epr1 := 0;
     new qbit epr2 := 0;

     call createEPR(epr1, epr2);
     send epr2 to Bob;

     teleport, epr1 *= CNot;  /* teleport: Control, epr1: Target */

     new bit m1 := 0;
     new bit m2 := 0;
     m1 := measure teleport;
     m2 := measure epr1;

     /* Transmit the classical measurement results to Bob */
     send m1, m2 to Bob;
   };
};


module Bob {
   receive q:qbit from Alice;
   receive m1:bit, m2:bit from Bob;

   if (m1 = 1) then {
      q *= [[ 0,1,1,0 ]];  /* Apply sigma_x */
   };

   if (m2 = 1) then {
      q *= [[ 1,0,0,-1 ]];  /* Apply sigma_z */
   };

   /* The state is now teleported */
   print "Teleported state:";
   dump q;
};
"""

MODULE_SKELETON = """\
module Alice {
   skip;
};

module Bob {
   skip;
};
"""

SEND_RECEIVE = """\
module Alice {
  new qbit q1 := 0;
  new qbit q2 := 1;
  send q1,q2 to Bob;
};
module Bob {
  receive var1:qbit, var2:qbit from Alice;
  skip;
};
"""

LISTINGS = {
    "identifiers": IDENTIFIERS,
    "procedures": PROCEDURES,
    "gates": GATES,
    "control_flow": CONTROL_FLOW,
    "dump_fragment": DUMP_FRAGMENT,
    "coin_toss": COIN_TOSS,
    "epr_original": EPR_ORIGINAL,
    "teleport_original": TELEPORT_ORIGINAL,
    "module_skeleton": MODULE_SKELETON,
    "send_receive": SEND_RECEIVE,
}


@pytest.mark.parametrize("name", sorted(LISTINGS))
def test_listing_parses(name):
    program = parse(LISTINGS[name])
    assert program is not None


def test_teleport_original_self_receive_is_static_error():
    # `receive ... from Bob` inside module Bob parses but cannot type-check
    from cqpl import check_program
    checked = check_program(parse(TELEPORT_ORIGINAL))
    assert any(d.code == "E_SELF_SEND" for d in checked.diagnostics)
