import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqpl.kraus import (DimensionError, HermitianError,
                        Permutation, apply_set, channel_equiv, choi_matrix,
                        commutator_expansion, contract, contract_all,
                        hs_inner, hs_norm, inversions, is_trace_preserving,
                        loewner_leq, verify_commutator_identity)

from genprog import random_unitary

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
I2 = np.eye(2, dtype=complex)


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_kraus_set(rng, d, n):
    return [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            for _ in range(n)]


# -- apply_set -----------------------------------------------------------------

def test_identity_set_is_identity():
    rng = np.random.default_rng(0)
    rho = random_density(rng, 4)
    assert np.allclose(apply_set([np.eye(4)], rho), rho)


def test_probabilistic_not_mixture():
    # one-half NOT plus one-half identity sends |0><0| to the even mixture
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    mixed = 0.5 * apply_set([SX], rho) + 0.5 * apply_set([I2], rho)
    assert np.allclose(mixed, np.eye(2) / 2)


def test_projective_set_dephases():
    plus = np.ones((2, 2), dtype=complex) / 2
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    assert np.allclose(apply_set([p0, p1], plus), np.diag([0.5, 0.5]))


def test_apply_set_dim_mismatch():
    with pytest.raises(DimensionError):
        apply_set([I2], np.eye(4))


# -- contraction -----------------------------------------------------------------

def test_contract_identity_sets():
    out = contract([I2], [I2])
    assert len(out) == 1 and np.allclose(out[0], I2)


def test_contract_singletons_is_product():
    rng = np.random.default_rng(1)
    a = random_kraus_set(rng, 3, 1)[0]
    b = random_kraus_set(rng, 3, 1)[0]
    out = contract([a], [b])
    assert len(out) == 1 and np.allclose(out[0], b @ a)


def test_contract_matches_sequential_application():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = int(rng.integers(2, 5))
        s1 = random_kraus_set(rng, d, int(rng.integers(1, 4)))
        s2 = random_kraus_set(rng, d, int(rng.integers(1, 4)))
        contracted = contract(s1, s2)
        for _ in range(5):
            rho = random_density(rng, d)
            direct = apply_set(contracted, rho)
            seq = apply_set(s2, apply_set(s1, rho))
            assert np.max(np.abs(direct - seq)) <= 1e-10


def test_contract_rectangular():
    rng = np.random.default_rng(3)
    tall = [rng.normal(size=(4, 2))]  # C^2 -> C^4
    wide = [rng.normal(size=(2, 4))]  # C^4 -> C^2
    out = contract(tall, wide)
    assert out[0].shape == (2, 2)
    with pytest.raises(DimensionError):
        contract(wide, wide)


def test_contract_all_left_to_right():
    rng = np.random.default_rng(4)
    sets = [random_kraus_set(rng, 2, 2) for _ in range(3)]
    rho = random_density(rng, 2)
    folded = apply_set(contract_all(sets), rho)
    seq = rho
    for s in sets:
        seq = apply_set(s, seq)
    assert np.max(np.abs(folded - seq)) <= 1e-10


# -- Hilbert-Schmidt --------------------------------------------------------------

def test_hs_identity():
    assert hs_inner(I2, I2) == pytest.approx(2)


def test_hs_orthogonal_paulis():
    assert hs_inner(SX, SZ) == pytest.approx(0)


def test_hs_norm_real_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        value = hs_inner(k, k)
        assert abs(value.imag) < 1e-12 and value.real >= 0
        assert hs_norm(k) == pytest.approx(np.sqrt(value.real))


def test_hs_shape_mismatch():
    with pytest.raises(DimensionError):
        hs_inner(I2, np.eye(3))


# -- Loewner order -------------------------------------------------------------------

def test_loewner_reflexive():
    assert loewner_leq(SZ, SZ)


def test_loewner_zero_below_identity():
    assert loewner_leq(np.zeros((2, 2)), I2)


def test_loewner_indefinite_difference():
    assert not loewner_leq(np.diag([1, 0]), np.diag([0, 1]))


def test_loewner_needs_hermitian():
    with pytest.raises(HermitianError):
        loewner_leq(np.array([[0, 1], [0, 0]]), I2)


def test_loewner_partial_order_on_psd_family():
    rng = np.random.default_rng(6)
    mats = []
    for _ in range(4):
        a = rng.normal(size=(3, 3))
        mats.append(a @ a.T)
    for a in mats:
        for b in mats:
            for c in mats:
                if loewner_leq(a, b) and loewner_leq(b, c):
                    assert loewner_leq(a, c)  # transitive


# -- channel equivalence ---------------------------------------------------------------

def test_unitary_mixing_preserves_channel():
    rng = np.random.default_rng(7)
    for _ in range(50):
        e = random_kraus_set(rng, 2, 2)
        u = random_unitary(rng, 2)
        f = [u[0, 0] * e[0] + u[0, 1] * e[1],
             u[1, 0] * e[0] + u[1, 1] * e[1]]
        assert channel_equiv(e, f, 1e-8)


def test_distinct_channels_rejected():
    rng = np.random.default_rng(8)
    rejected = 0
    for _ in range(50):
        e = random_kraus_set(rng, 2, 2)
        f = random_kraus_set(rng, 2, 2)
        if not channel_equiv(e, f, 1e-8):
            rejected += 1
    assert rejected == 50


def test_identity_vs_not():
    assert not channel_equiv([I2], [SX])


def test_zero_padding_is_equivalent():
    assert channel_equiv([H], [H, np.zeros((2, 2))])


def test_channel_equiv_is_equivalence_relation():
    rng = np.random.default_rng(9)
    family = []
    base = random_kraus_set(rng, 2, 2)
    for _ in range(4):
        u = random_unitary(rng, 2)
        family.append([u[0, 0] * base[0] + u[0, 1] * base[1],
                       u[1, 0] * base[0] + u[1, 1] * base[1]])
    family.append(random_kraus_set(rng, 2, 2))
    for a in family:
        assert channel_equiv(a, a)  # reflexive
        for b in family:
            assert channel_equiv(a, b) == channel_equiv(b, a)  # symmetric
            for c in family:
                if channel_equiv(a, b) and channel_equiv(b, c):
                    assert channel_equiv(a, c, 1e-8)  # transitive


def test_equal_choi_means_equal_action():
    rng = np.random.default_rng(10)
    for _ in range(20):
        a = random_kraus_set(rng, 2, 2)
        b = random_kraus_set(rng, 2, 2)
        same_choi = np.max(np.abs(choi_matrix(a) - choi_matrix(b))) <= 1e-9
        rho = random_density(rng, 2)
        same_action = np.max(np.abs(apply_set(a, rho) -
                                    apply_set(b, rho))) <= 1e-9
        if same_choi:
            assert same_action
        if not same_action:
            assert not same_choi


def test_trace_preserving_detection():
    assert is_trace_preserving([H])
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    assert is_trace_preserving([p0, p1])
    assert not is_trace_preserving([p0])


# -- permutations and the commutator identity --------------------------------------------

def test_permutation_validation():
    with pytest.raises(ValueError):
        Permutation([1, 1, 2])


def test_inversions_worked_example():
    phi = Permutation.from_digits("52314")
    inv = inversions(phi)
    assert inv == [(5, 2), (5, 3), (5, 1), (5, 4), (2, 1), (3, 1)]


def test_inversions_identity_empty():
    assert inversions(Permutation([1, 2, 3, 4])) == []


def test_inversions_reversal_all_pairs():
    assert set(inversions(Permutation([3, 2, 1]))) == {(3, 2), (3, 1), (2, 1)}


def test_expansion_52314_term_sets():
    phi = Permutation.from_digits("52314")
    expansion = commutator_expansion(phi)
    by_inv = {(t.s, t.t): t for t in expansion.terms}
    # X: i = 2,3 means the product A_phi(2) A_phi(3) = A_2 A_3; Y: i = 5 -> A_4
    assert by_inv[(5, 1)].x == (2, 3) and by_inv[(5, 1)].y == (4,)
    assert by_inv[(5, 2)].x == () and by_inv[(5, 2)].y == (3, 1, 4)
    assert by_inv[(5, 3)].x == (2,) and by_inv[(5, 3)].y == (1, 4)
    assert by_inv[(5, 4)].x == (2, 3, 1) and by_inv[(5, 4)].y == ()
    assert by_inv[(3, 1)].z == (4, 5)
    assert by_inv[(2, 1)].z == (3, 4, 5)


def test_expansion_renders_match_printed_identities():
    assert commutator_expansion(Permutation.from_digits("1432")).render() == \
        "1234 + 1[4,3]2 + 13[4,2] + 1[3,2]4"
    assert commutator_expansion(Permutation.from_digits("14532")).render() == \
        "12345 + 14[5,3]2 + 143[5,2] + 1[4,3]25 + 13[4,2]5 + 1[3,2]45"
    assert commutator_expansion(Permutation.from_digits("52314")).render() == \
        "12345 + 231[5,4] + 2[5,3]14 + [5,2]314 + 23[5,1]4 + 2[3,1]45 + [2,1]345"


def test_identity_expansion_empty_sum():
    expansion = commutator_expansion(Permutation([1, 2, 3]))
    assert expansion.terms == ()


def test_commutator_identity_random():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(2, 4))
        perm = list(range(1, n + 1))
        rng.shuffle(perm)
        mats = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
                for _ in range(n)]
        worst = max(worst, verify_commutator_identity(mats, Permutation(perm)))
    assert worst <= 1e-8


def test_commutator_identity_52314():
    rng = np.random.default_rng(12)
    mats = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            for _ in range(5)]
    assert verify_commutator_identity(
        mats, Permutation.from_digits("52314")) <= 1e-8


def test_commuting_diagonals_zero_corrections():
    rng = np.random.default_rng(13)
    mats = [np.diag(rng.normal(size=3)).astype(complex) for _ in range(4)]
    phi = Permutation([4, 1, 3, 2])
    assert verify_commutator_identity(mats, phi) <= 1e-12
    lhs = mats[3] @ mats[0] @ mats[2] @ mats[1]
    straight = mats[0] @ mats[1] @ mats[2] @ mats[3]
    assert np.allclose(lhs, straight)


def test_identity_permutation_residual_exactly_zero():
    rng = np.random.default_rng(14)
    mats = [rng.normal(size=(3, 3)) for _ in range(4)]
    assert verify_commutator_identity(mats, Permutation([1, 2, 3, 4])) == 0.0


@settings(max_examples=120, deadline=None)
@given(st.permutations(list(range(1, 7))))
def test_inversion_count_and_term_count_agree(images):
    phi = Permutation(images)
    inv = inversions(phi)
    # one correction term per inversion, and the pairs are exactly the
    # out-of-order value pairs of the one-line form
    assert len(commutator_expansion(phi).terms) == len(inv)
    brute = {(a, b) for i, a in enumerate(images) for b in images[i + 1:]
             if a > b}
    assert set(inv) == brute


@settings(max_examples=60, deadline=None)
@given(st.permutations(list(range(1, 6))))
def test_expansion_holds_for_random_small_matrices(images):
    phi = Permutation(images)
    rng = np.random.default_rng(sum(v * 10 ** i for i, v in enumerate(images)))
    mats = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            for _ in range(len(images))]
    assert verify_commutator_identity(mats, phi) <= 1e-9
