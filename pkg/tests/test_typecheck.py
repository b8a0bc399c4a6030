import numpy as np
import pytest

from cqpl import parse
from cqpl import errors as E
from cqpl.runtime import run_program
from cqpl.typecheck import (BIT, FLOAT, INT, QBIT, QINT, QSHORT, SHORT, VOID,
                            check_program, comm_balance_check, type_equiv,
                            TypeSignature)

from genprog import gen_source


def check(source):
    return check_program(parse(source))


def codes(source):
    return [d.code for d in check(source).diagnostics]


# -- type signatures ----------------------------------------------------------

def test_signature_widths():
    assert (BIT.width, QBIT.width, SHORT.width, QSHORT.width,
            INT.width, QINT.width, FLOAT.width, VOID.width) == \
        (1, 1, 8, 8, 16, 16, 64, 0)


def test_type_equiv_examples():
    assert type_equiv(QSHORT, TypeSignature("quantum", 8))
    assert not type_equiv(BIT, QBIT)
    assert type_equiv(VOID, VOID)
    assert not type_equiv(FLOAT, TypeSignature("classical", 64))


# -- acceptance of the worked examples ---------------------------------------

def test_corpus_accepted(corpus_sources):
    for name, source in corpus_sources.items():
        checked = check(source)
        assert checked.ok, (name, [str(d) for d in checked.diagnostics])


# -- negative suite: one minimal program per judgement ------------------------

NEGATIVE = {
    E.E_DUP_TUPLE: "new qbit q := 0; q,q *= CNot;",
    E.E_USE_AFTER_SEND: ("module A { new qbit q := 0; send q to B; q *= H; };"
                         " module B { receive p:qbit from A; };"),
    E.E_DIM_MISMATCH: "new qbit q := 0; q *= CNot;",
    E.E_NOT_QUANTUM: "new int i := 0; i *= H;",
    E.E_NOT_UNITARY: "new qbit q := 0; q *= [[1, 0, 0, 0.999]];",
    E.E_MEASURE_WIDTH: ("new int i := 0; new qbit q := 0; "
                        "i := measure q;"),
    E.E_MEASURE_FLOAT: ("new float f := 0.0; new qbit q := 0; "
                        "f := measure q;"),
    E.E_COND_NOT_BIT: "new int i := 3; if i then { skip; };",
    E.E_RECV_SHADOW: ("module A { new qbit q := 0; send q to B; };"
                      " module B { new qbit q := 0; "
                      "receive q:qbit from A; };"),
    E.E_UNKNOWN_MODULE: ("module A { new qbit q := 0; "
                         "send q to NoSuchModule; };"),
    E.E_SELF_SEND: "module A { new qbit q := 0; send q to A; };",
    E.E_UNDECLARED: "x := 1;",
    E.E_REDECLARED: "new int x := 1; new int x := 2;",
    E.E_QUANTUM_INIT: "new qbit q := 2;",
    E.E_TYPE_MISMATCH: "new bit b := 0; new float f := 1.5; b := f;",
    E.E_ARITY: "proc f: a:int { skip; } in { call f(); };",
    E.E_UNKNOWN_PROC: "call nope();",
    E.E_NOT_CLASSICAL: "new qbit q := 0; print q;",
    E.E_COMM_IN_PROC: ("module A { proc f: q:qbit { send q to B; } in skip; };"
                       " module B { skip; };"),
}


@pytest.mark.parametrize("code", sorted(NEGATIVE))
def test_negative_judgement(code):
    found = codes(NEGATIVE[code])
    assert code in found, f"expected {code}, got {found}"


def test_measure_qint_into_int_ok():
    assert check("new int i := 0; new qint q := 0; i := measure q;").ok


def test_ft_width_matches():
    assert check("new qbit a := 0; new qbit b := 0; a, b *= FT(2);").ok
    assert E.E_DIM_MISMATCH in codes("new qbit a := 0; a *= FT(2);")


def test_ft_bad_param():
    assert E.E_BAD_PARAM in codes("new qbit a := 0; a *= FT(0);")


def test_checker_continues_past_independent_errors():
    found = codes("new qbit q := 0; q,q *= CNot; x := 1;")
    assert E.E_DUP_TUPLE in found and E.E_UNDECLARED in found


def test_send_in_branch_then_use_rejected():
    src = ("module A { new qbit q := 0; new bit c := 0;"
           " if (c = 1) then { send q to B; } else { skip; };"
           " q *= H; };"
           " module B { receive p:qbit from A; };")
    assert E.E_USE_AFTER_SEND in codes(src)


def test_send_in_while_body_rejected_on_second_iteration():
    src = ("module A { new qbit q := 0; new int i := 2;"
           " while (i > 0) do { send q to B; i := i - 1; }; };"
           " module B { receive p:qbit from A; receive r:qbit from A; };")
    assert E.E_USE_AFTER_SEND in codes(src)


def test_overshading_restores_outer_binding():
    src = """
    new int x := 1;
    {
        new float x := 2.5;
        x := x + 1.0;
    };
    x := x + 1;
    print x;
    """
    checked = check(src)
    assert checked.ok
    result = run_program(checked, seed=0)
    assert result.output == ["2"]


def test_receive_shadow_of_outer_scope_rejected():
    # the received name must not be visible at all, not merely fresh in the
    # innermost scope
    src = ("module A { new qbit q := 0; send q to B; };"
           " module B { new int q := 0; { receive q:qbit from A; }; };")
    assert E.E_RECV_SHADOW in codes(src)


def test_condition_comparison_accepted():
    assert check("new int i := 3; if (i = 3) then { skip; };").ok


def test_int_literal_fits_bit():
    assert check("new bit b := 1;").ok
    assert E.E_TYPE_MISMATCH in codes("new bit b := 2;")


def test_quantum_expression_rejected():
    assert E.E_NOT_CLASSICAL in codes("new qbit q := 0; new int i := 0; i := q + 1;")


def test_assign_to_quantum_rejected():
    assert E.E_NOT_CLASSICAL in codes("new qbit q := 0; q := 1;")


def test_proc_result_arity():
    src = ("proc f: a:int, q:qbit { skip; } in "
           "{ new int x := 0; new int y := 0; new qbit p := 0; "
           "(x, y) := call f(1, p); };")
    assert E.E_ARITY in codes(src)


def test_proc_duplicate_quantum_args():
    src = ("proc f: a:qbit, b:qbit { skip; } in "
           "{ new qbit q := 0; call f(q, q); };")
    assert E.E_DUP_TUPLE in codes(src)


# -- soundness: accepted programs never fail at runtime for static causes ----

_STATIC_CODES = {E.E_DUP_TUPLE, E.E_DIM_MISMATCH, E.E_MEASURE_WIDTH,
                 E.E_USE_AFTER_SEND, E.E_NOT_QUANTUM, E.E_NOT_UNITARY}


def test_random_accepted_programs_run_clean(corpus_sources):
    rng = np.random.default_rng(2024)
    accepted = 0
    for k in range(1000):
        source = gen_source(rng, allow_modules=True)
        checked = check(source)
        assert checked.ok, (source, [str(d) for d in checked.diagnostics])
        accepted += 1
        result = run_program(checked, seed=k, check_ownership=True)
        assert result.failure is None, (source, str(result.failure))
        assert not result.deadlocked, source
    assert accepted == 1000


def test_corpus_runs_clean(corpus_sources):
    for name, source in corpus_sources.items():
        if name in ("deadlock", "unbounded"):
            continue
        checked = check(source)
        result = run_program(checked, seed=5, check_ownership=True)
        assert result.failure is None, (name, str(result.failure))


# -- communication balance -----------------------------------------------------

def test_balance_deadlock_program(corpus_sources):
    program = parse(corpus_sources["deadlock"])
    result = comm_balance_check(program)
    assert result.status == "imbalanced"
    assert any(w.code == E.W_COMM_IMBALANCE for w in result.warnings)


def test_balance_epr(corpus_sources):
    assert comm_balance_check(parse(corpus_sources["epr"])).status == "balanced"


def test_balance_teleport(corpus_sources):
    assert comm_balance_check(parse(corpus_sources["teleport"])).status == "balanced"


def test_balance_unknown_on_measured_loop(corpus_sources):
    assert comm_balance_check(parse(corpus_sources["unbounded"])).status == "unknown"


def test_balance_unrolls_constant_loops():
    src = ("module A { new int i := 3; while (i > 0) do "
           "{ new qbit q := 0; send q to B; i := i - 1; }; };"
           " module B { receive a:qbit, b:qbit, c:qbit from A; };")
    assert comm_balance_check(parse(src)).status == "balanced"


def test_balance_detects_type_mismatch():
    src = ("module A { new bit b := 0; send b to B; };"
           " module B { receive q:qbit from A; };")
    result = comm_balance_check(parse(src))
    assert result.status == "imbalanced"
