import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cold.pauli import (
    PauliError,
    PauliSum,
    PauliWord,
    commutator,
    multiply,
    site_operator,
    to_dense,
    total,
    trace_inner,
)

SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_label(label):
    out = np.eye(1, dtype=complex)
    for ch in label:
        out = np.kron(out, SINGLE[ch])
    return out


def labels(n):
    return st.text(alphabet="IXYZ", min_size=n, max_size=n)


@st.composite
def pauli_sums(draw, n, max_terms=6, real=False):
    k = draw(st.integers(1, max_terms))
    pairs = []
    for _ in range(k):
        label = draw(labels(n))
        re = draw(st.floats(-2, 2, allow_nan=False))
        im = 0.0 if real else draw(st.floats(-2, 2, allow_nan=False))
        pairs.append((label, complex(re, im)))
    return PauliSum.from_labels(pairs)


# multiply

def test_single_site_table():
    word, phase = multiply(PauliWord.from_label("X"), PauliWord.from_label("Y"))
    assert word.label == "Z" and phase == 1j


def test_involution_is_identity():
    word, phase = multiply(PauliWord.from_label("IX"), PauliWord.from_label("IX"))
    assert word.label == "II" and phase == 1


def test_two_site_product_matches_dense():
    a, b = PauliWord.from_label("YZ"), PauliWord.from_label("ZZ")
    word, phase = multiply(a, b)
    assert word.label == "XI"
    # dense oracle: Y.Z = iX on site 0, Z.Z = I on site 1
    np.testing.assert_allclose(kron_label("YZ") @ kron_label("ZZ"), phase * kron_label("XI"), atol=1e-15)
    assert phase == 1j


def test_multiply_length_mismatch():
    with pytest.raises(PauliError):
        multiply(PauliWord.from_label("X"), PauliWord.from_label("XX"))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(labels(n), labels(n), labels(n))))
def test_multiply_associative_and_phase_closed(triple):
    a, b, c = (PauliWord.from_label(s) for s in triple)
    ab, p_ab = multiply(a, b)
    left, p_left = multiply(ab, c)
    bc, p_bc = multiply(b, c)
    right, p_right = multiply(a, bc)
    assert left == right
    assert p_ab * p_left == pytest.approx(p_bc * p_right, abs=1e-15)
    for p in (p_ab, p_left, p_bc, p_right):
        assert p in (1, -1, 1j, -1j)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(labels(n), labels(n))))
def test_multiply_matches_kronecker_product(pair):
    a, b = pair
    word, phase = multiply(PauliWord.from_label(a), PauliWord.from_label(b))
    np.testing.assert_allclose(kron_label(a) @ kron_label(b), phase * kron_label(word.label), atol=1e-14)


def test_identity_word_is_neutral():
    for label in ("X", "YZ", "ZIY"):
        w = PauliWord.from_label(label)
        assert multiply(PauliWord.identity(w.n_sites), w) == (w, 1)


def test_word_rejects_bad_letters_and_sizes():
    with pytest.raises(PauliError):
        PauliWord.from_label("XQ")
    with pytest.raises(PauliError):
        PauliWord(0, 0)


# commutator

def test_local_y_commutator_with_two_site_ising():
    j, x, z, alpha = 0.7, -1.3, 0.4, 0.25
    n = 2
    H = (j * PauliSum.from_word("ZZ") + x * total(n, "X") + z * total(n, "Z"))
    got = 1j * commutator(alpha * site_operator(n, 0, "Y"), H)
    want = 2 * alpha * PauliSum.from_labels({"XZ": -j, "ZI": x, "XI": -z})
    assert got.allclose(want, atol=1e-14)


def test_global_y_commutator_with_two_site_ising():
    j, x, z, alpha = 0.7, -1.3, 0.4, 0.25
    n = 2
    H = (j * PauliSum.from_word("ZZ") + x * total(n, "X") + z * total(n, "Z"))
    got = 1j * commutator(alpha * total(n, "Y"), H)
    want = 2 * alpha * (PauliSum.from_labels({"XZ": -j, "ZX": -j}) + x * total(n, "Z") - z * total(n, "X"))
    assert got.allclose(want, atol=1e-14)


def test_self_commutator_vanishes():
    A = PauliSum.from_labels({"XY": 1.0, "ZI": 0.5, "YY": -2.0})
    assert len(commutator(A, A)) == 0


def test_disjoint_support_commutes():
    assert len(commutator(PauliSum.from_word("XI"), PauliSum.from_word("IZ"))) == 0


def test_commutator_size_mismatch():
    with pytest.raises(PauliError):
        commutator(PauliSum.from_word("X"), PauliSum.from_word("XX"))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(pauli_sums(n), pauli_sums(n))))
def test_commutator_antisymmetric(pair):
    a, b = pair
    assert commutator(a, b) == -commutator(b, a)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(pauli_sums(n, real=True), pauli_sums(n, real=True))))
def test_hermitian_inputs_give_real_i_commutator(pair):
    a, b = pair
    assert (1j * commutator(a, b)).is_hermitian(tol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(pauli_sums(n), pauli_sums(n))))
def test_commutator_matches_dense(pair):
    a, b = pair
    da, db = to_dense(a), to_dense(b)
    np.testing.assert_allclose(to_dense(commutator(a, b)), da @ db - db @ da, atol=1e-12)


# trace inner product

def test_trace_inner_normalisation_and_orthogonality():
    x, y = PauliSum.from_word("X"), PauliSum.from_word("Y")
    assert trace_inner(x, x) == 1
    assert trace_inner(x, y) == 0


def test_trace_inner_rotating_spin_G_at_zero_alpha():
    for lam in np.linspace(0, np.pi / 2, 7):
        G = PauliSum.from_labels({"X": np.sin(lam), "Z": -np.cos(lam)})
        assert trace_inner(G, G).real == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(pauli_sums(n), pauli_sums(n))))
def test_trace_inner_matches_dense(pair):
    a, b = pair
    dense = np.trace(to_dense(a) @ to_dense(b)) / 2**a.n_sites
    assert abs(trace_inner(a, b) - dense) < 1e-12


@settings(max_examples=50, deadline=None)
@given(pauli_sums(3, real=True))
def test_trace_inner_self_is_nonnegative(a):
    val = trace_inner(a, a)
    assert abs(val.imag) < 1e-14 and val.real >= 0


def test_trace_inner_size_mismatch():
    with pytest.raises(PauliError):
        trace_inner(PauliSum.from_word("X"), PauliSum.from_word("XX"))


# dense materialisation

def test_dense_single_and_double_z():
    np.testing.assert_array_equal(to_dense(PauliSum.from_word("Z")), np.diag([1, -1]))
    np.testing.assert_array_equal(to_dense(PauliSum.from_word("ZZ")), np.diag([1, -1, -1, 1]))


def test_dense_matches_kron_for_every_two_site_word():
    for letters in itertools.product("IXYZ", repeat=2):
        label = "".join(letters)
        np.testing.assert_allclose(to_dense(PauliSum.from_word(label)), kron_label(label), atol=0)


@settings(max_examples=30, deadline=None)
@given(pauli_sums(3))
def test_dense_trace_oracle(a):
    d = to_dense(a)
    assert abs(trace_inner(a, a) - np.trace(d @ d) / 8) < 1e-12


@settings(max_examples=30, deadline=None)
@given(pauli_sums(3, real=True))
def test_real_coefficients_give_hermitian_dense(a):
    d = to_dense(a)
    np.testing.assert_allclose(d, d.conj().T, atol=1e-14)


def test_dense_cap_enforced():
    with pytest.raises(PauliError):
        to_dense(PauliSum.from_word("X" * 13))
    with pytest.raises(PauliError):
        to_dense(PauliSum.from_word("XXX"), cap=2)


# canonical form

def test_prune_threshold_drops_tiny_terms():
    s = PauliSum.from_labels({"X": 1.0, "Z": 1e-15})
    assert len(s) == 1
    cancel = PauliSum.from_word("X") - PauliSum.from_word("X")
    assert len(cancel) == 0


def test_duplicate_words_merge():
    s = PauliSum.from_labels([("XY", 1.0), ("XY", 2.0)])
    assert len(s) == 1 and s.coefficient("XY") == 3.0


def test_hermitian_iff_real():
    assert PauliSum.from_labels({"XI": 1.0, "YZ": -2.0}).is_hermitian()
    assert not PauliSum.from_labels({"X": 1j}).is_hermitian()


def test_text_round_trip():
    s = PauliSum.from_labels({"XYZ": 0.5 - 0.25j, "IIZ": -3.0, "YYY": 1e-3j})
    assert PauliSum.from_text(s.to_text()) == s
    assert s.to_text().splitlines()[0].split()[-1] in {"XYZ", "IIZ", "YYY"}


def test_iteration_order_is_deterministic():
    a = PauliSum.from_labels([("ZZ", 1.0), ("XI", 2.0), ("YX", 3.0)])
    b = PauliSum.from_labels([("YX", 3.0), ("ZZ", 1.0), ("XI", 2.0)])
    assert [w.label for w, _ in a] == [w.label for w, _ in b]
