from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impq import nonlocality as nl
from impq.campaign import commuting_partner, random_pair
from impq.imprecise import upper_operator
from impq.operators import Projector, haar_random_projector, make_rng


def random_scene(d1, d2, seed, ranks=None):
    rng = make_rng(seed)
    r = ranks or (int(rng.integers(1, d1)), int(rng.integers(1, d1)), int(rng.integers(1, d2)), int(rng.integers(1, d2)))
    p1, q1 = random_pair(d1, r[0], r[1], rng)
    p2, q2 = random_pair(d2, r[2], r[3], rng)
    return nl.TwoParticleScene(p1, q1, p2, q2)


class TestTensor:
    def test_kron_diag(self):
        e = np.diag([1.0, 0.0])
        np.testing.assert_array_equal(nl.kron(e, e), np.diag([1.0, 0, 0, 0]))

    def test_kron_identity_left(self):
        b = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(nl.kron(np.eye(2), b), np.block([[b, np.zeros((3, 3))], [np.zeros((3, 3)), b]]))

    def test_half_ones(self):
        h = np.full((2, 2), 0.5)
        np.testing.assert_allclose(nl.kron(h, h), np.full((4, 4), 0.25))

    def test_swap_kron(self):
        a, b = np.arange(4.0).reshape(2, 2), np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(nl.swap_kron(a, b), np.kron(b, a))

    def test_swap_unitary_trivial(self):
        np.testing.assert_array_equal(nl.swap_unitary(1, 4), np.eye(4))

    def test_swap_unitary_qubits(self):
        w = nl.swap_unitary(2, 2)
        np.testing.assert_array_equal(w, np.eye(4)[[0, 2, 1, 3]])
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            np.testing.assert_allclose(w @ nl.kron(a, b) @ w.T, nl.kron(b, a), atol=1e-14)

    @pytest.mark.parametrize("da,db", [(2, 3), (3, 2), (4, 5)])
    def test_swap_unitary_integer_exact(self, da, db):
        a = np.arange(da * da).reshape(da, da)
        b = np.arange(db * db).reshape(db, db) + 7
        w = nl.swap_unitary(da, db)
        np.testing.assert_array_equal(w @ np.kron(a, b) @ w.T, np.kron(b, a))

    def test_scene_dims(self):
        with pytest.raises(ValueError):
            nl.TwoParticleScene(Projector.identity(2), Projector.identity(3), Projector.identity(2), Projector.identity(2))


class TestLowerLocality:
    def test_xz(self, xz_pair):
        out = nl.lower_factorization_check(nl.TwoParticleScene(*xz_pair, *xz_pair))
        assert out["passed"] and out["rank"] == 0

    def test_commuting(self):
        rng = make_rng(1)
        p1, p2 = haar_random_projector(3, 2, rng), haar_random_projector(2, 1, rng)
        q1, q2 = commuting_partner(p1, rng), commuting_partner(p2, rng)
        out = nl.lower_factorization_check(nl.TwoParticleScene(p1, q1, p2, q2))
        assert out["passed"]
        assert out["rank"] == round(np.trace(nl.kron(p1.matrix @ q1.matrix, p2.matrix @ q2.matrix)).real)

    def test_random(self):
        assert nl.lower_factorization_check(random_scene(3, 4, 2))["passed"]


class TestGap:
    def test_commuting_side(self):
        rng = make_rng(3)
        p1, q1 = random_pair(3, 1, 2, rng)
        p2 = haar_random_projector(3, 1, rng)
        rep = nl.upper_gap(nl.TwoParticleScene(p1, q1, p2, commuting_partner(p2, rng)))
        assert rep.max_abs <= 1e-9 and rep.passed()

    def test_marginal(self):
        rng = make_rng(4)
        p1, q1 = random_pair(4, 2, 2, rng)
        eye = Projector.identity(3)
        scene = nl.TwoParticleScene(p1, q1, eye, eye)
        assert nl.upper_gap(scene).max_abs <= 1e-9
        np.testing.assert_allclose(scene.product_upper(), nl.kron(upper_operator(p1, q1).matrix, np.eye(3)), atol=1e-9)

    def test_spin(self):
        rep = nl.upper_gap(nl.spin_scene())
        np.testing.assert_allclose(np.linalg.eigvalsh(rep.gap), [0, 0, 0.25, 0.25], atol=1e-12)
        assert rep.passed()

    def test_sector_map(self):
        rep = nl.upper_gap(random_scene(3, 4, 5, ranks=(1, 2, 2, 1)))
        first = rep.sector_map[0]
        assert first["sectors"] == ["generic", "generic"] and first["start"] == 0
        assert sum(e["size"] for e in rep.sector_map) == 12
        assert rep.to_dict()["pass"]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32))
    def test_theorem(self, d1, d2, seed):
        rep = nl.upper_gap(random_scene(d1, d2, seed))
        assert rep.min_eigenvalue >= -1e-9
        assert rep.residual <= 1e-8


class TestPairing:
    def test_spin(self):
        d = nl.pairing_difference(nl.spin_scene())
        assert abs(d.trace) <= 1e-12 and d.max_abs > 0.1

    def test_commuting_pairings_agree(self):
        rng = make_rng(6)
        p1, q1 = random_pair(2, 1, 1, rng)
        p2 = haar_random_projector(3, 1, rng)
        d = nl.pairing_difference(nl.TwoParticleScene(p1, q1, p2, commuting_partner(p2, rng)))
        assert d.max_abs <= 1e-9


class TestWitness:
    def test_spots(self):
        num, closed = nl.separable_witness(1.0, 0.0, 0.0)
        assert num == pytest.approx(1 / 12, abs=1e-12) and closed == pytest.approx(1 / 12, abs=1e-15)
        for phi in (0.0, 2.0, 5.0):
            assert abs(nl.separable_witness(0.5, 0.0, phi)[0]) <= 1e-12

    def test_generic_point(self):
        num, closed = nl.separable_witness(0.7, 0.3, np.pi / 3)
        assert abs(num - closed) <= 1e-12

    def test_domain(self):
        with pytest.raises(ValueError):
            nl.single_qubit_state(1.2, 0.0, 0.0)
        with pytest.raises(ValueError):
            nl.single_qubit_state(0.5, 0.6, 0.0)
        with pytest.raises(ValueError):
            nl.single_qubit_state(0.5, 0.1, 7.0)

    def test_grid(self):
        rows = nl.witness_grid()
        assert len(rows) == 11 * 12 * 2 - 2 * 12
        assert max(abs(r[3] - r[4]) for r in rows) <= 1e-12


class TestAppendix:
    def test_vacuous(self):
        rng = make_rng(7)
        p2 = haar_random_projector(2, 1, rng)
        scene = nl.TwoParticleScene(*random_pair(3, 1, 1, rng), p2, p2)
        assert nl.verify_appendix(scene).vacuous

    def test_generic_2_3(self):
        scene = random_scene(4, 6, 8, ranks=(2, 2, 3, 3))
        rep = nl.verify_appendix(scene)
        assert (rep.traces["m1"], rep.traces["m2"]) == (2, 3)
        assert rep.traces["pp"] == 6 and rep.traces["join_direct"] == 12
        assert rep.passed, {k: v for k, v in rep.residuals.items() if v > rep.tol}

    def test_spin(self):
        rep = nl.verify_appendix(nl.spin_scene())
        assert rep.passed and rep.traces["join_complemented"] == 2

    def test_block_calculus_ragged(self):
        rng = np.random.default_rng(9)
        xs = [rng.normal(size=(k, k)) for k in (1, 3)]
        ys = [rng.normal(size=(k, k)) for k in (2, 1, 2)]
        assert max(nl.block_calculus_residuals(xs, ys).values()) <= 1e-14


class TestSpinReport:
    def test_report(self):
        rep = nl.spin_half_report()
        assert rep["pass"]
        assert rep["reference_chain"]["holds"] is False
        assert max(rep["reference_as_gaps_under_plus_convention"].values()) <= 1e-12

    def test_convention_search(self):
        hits = [c for c in nl.search_spin_conventions() if c["operators_match"]]
        assert {(c["sign_x"], c["sign_z"]) for c in hits} == {(-1, -1), (-1, 1)}
        assert any(c["order"] == nl.SPIN_ORDER and c["sign_x"] == nl.SPIN_SIGN_X and c["sign_z"] == nl.SPIN_SIGN_Z
                   for c in hits)

    def test_reference_values(self):
        np.testing.assert_array_equal(nl.REFERENCE_DIRECT * 12,
                                      [[1, -1, -1, 0], [-1, 1, 1, 0], [-1, 1, 1, 0], [0, 0, 0, 3]])
        np.testing.assert_array_equal(nl.REFERENCE_CROSSED * 12,
                                      [[0, 0, 0, 0], [0, 2, -1, -1], [0, -1, 2, -1], [0, -1, -1, 2]])
