"""Action sets, state grids, table lookup and policy files."""

import io
import json

import numpy as np
import pytest

from lharq.channel import FadingChannel
from lharq.dp import optimize_an, optimize_lharq
from lharq.per_model import SyntheticPer
from lharq.policy import (
    ActionSet,
    Policy,
    j_range,
    load_policy,
    lookup_action,
    make_grid,
    policy_from_dict,
    policy_to_dict,
    save_policy,
)

R = 3.75


@pytest.fixture(scope="module")
def setup():
    model = SyntheticPer(R)
    quad = FadingChannel.from_db(15.0).quadrature(64)
    return model, quad


@pytest.fixture(scope="module")
def policy(setup):
    model, quad = setup
    return optimize_lharq(model, quad, 3, ActionSet(R, 16), n_j=16).policy


class TestActionSet:
    def test_grid(self):
        a = ActionSet(R, 4)
        np.testing.assert_allclose(a.actions, [0.9375, 1.875, 2.8125, 3.75])
        assert a.actions[-1] == R
        assert a.delta == R / 4
        assert len(a) == 4

    def test_bits(self):
        assert ActionSet.from_bits(R, 6).n_rates == 64
        assert ActionSet(R, 64).feedback_bits == 6
        assert ActionSet(R, 5).feedback_bits == 3
        assert ActionSet(R, 1).feedback_bits == 0

    def test_refinement_is_superset(self):
        coarse = ActionSet(R, 4).actions
        fine = ActionSet(R, 16).actions
        assert all(np.any(np.isclose(fine, c, rtol=0, atol=1e-12)) for c in coarse)

    @pytest.mark.parametrize("rate, n", [(0.0, 4), (R, 0), (R, 2.5)])
    def test_invalid(self, rate, n):
        with pytest.raises(ValueError):
            ActionSet(rate, n)


class TestGrid:
    def test_ranges(self):
        assert j_range("lharq", R, 1) == (0.0, 0.0)
        assert j_range("lharq", R, 3) == (0.0, 2 * R)
        assert j_range("an", R, 1) == (R, R)
        assert j_range("an", R, 3) == (R, 3 * R)

    def test_first_round_single_node(self, setup):
        model, quad = setup
        g = make_grid("an", R, 3, quad, 8)
        assert g.j_nodes[0].tolist() == [R]
        assert g.j_nodes[2][-1] == pytest.approx(3 * R)
        assert g.rounds == 3

    def test_invalid(self, setup):
        _, quad = setup
        with pytest.raises(ValueError):
            make_grid("bogus", R, 3, quad)
        with pytest.raises(ValueError):
            make_grid("lharq", R, 3, quad, n_j=1)


class TestLookup:
    def test_at_node(self, policy):
        nodes = policy.grid.snr_nodes
        j_nodes = policy.grid.j_nodes[1]
        for si in (0, 10, 40):
            for ji in (0, 5, 15):
                expect = policy.action_set.actions[policy.tables[1][si, ji]]
                assert lookup_action(policy, 2, nodes[si], j_nodes[ji]) == expect

    def test_beyond_truncation(self, policy):
        top = policy.action_set.actions[policy.tables[0][-1, 0]]
        assert policy.lookup_action(1, 1e6, 0.0) == top

    def test_j_between_equal_nodes(self, setup):
        model, quad = setup
        grid = make_grid("lharq", R, 3, quad, 4)
        tables = (np.zeros((quad.nodes.size, 1), int), np.full((quad.nodes.size, 4), 2))
        p = Policy("lharq", 3, ActionSet(R, 4), grid, tables)
        mid = 0.5 * (grid.j_nodes[1][1] + grid.j_nodes[1][2])
        assert p.lookup_action(2, 20.0, mid) == ActionSet(R, 4).actions[2]

    def test_clamp_counter(self, setup):
        model, quad = setup
        p = optimize_lharq(model, quad, 3, ActionSet(R, 4), n_j=8).policy
        p.lookup_action(2, 10.0, R)
        assert p.clamped_lookups == 0
        p.lookup_action(2, 10.0, [-1.0, 2 * R])
        assert p.clamped_lookups == 2

    def test_vectorized(self, policy):
        snr = np.array([0.0, 5.0, 30.0])
        j = np.array([0.0, 1.0, 3.0])
        vec = policy.lookup_action(2, snr, j)
        assert vec.tolist() == [policy.lookup_action(2, s, x) for s, x in zip(snr, j)]

    def test_round_range(self, policy):
        with pytest.raises(ValueError):
            policy.lookup_action(3, 10.0, 0.0)

    def test_invalid_tables(self, policy):
        with pytest.raises(ValueError):
            Policy("lharq", 3, policy.action_set, policy.grid, policy.tables[:1])
        bad = (policy.tables[0], np.full_like(policy.tables[1], 99))
        with pytest.raises(ValueError):
            Policy("lharq", 3, policy.action_set, policy.grid, bad)


class TestSerialization:
    @pytest.mark.parametrize("scheme", ["lharq", "an"])
    def test_roundtrip(self, setup, scheme, tmp_path):
        model, quad = setup
        opt = optimize_lharq if scheme == "lharq" else optimize_an
        p = opt(model, quad, 3, ActionSet(R, 8), n_j=8, metadata={"avg_snr_db": 15.0}).policy
        path = tmp_path / "p.json"
        save_policy(p, path)
        q = load_policy(path)
        assert q.scheme == scheme and q.rounds == 3 and q.metadata == {"avg_snr_db": 15.0}
        for a, b in zip(p.tables, q.tables):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(p.grid.snr_nodes, q.grid.snr_nodes)
        np.testing.assert_array_equal(p.grid.quadrature.weights, q.grid.quadrature.weights)
        for a, b in zip(p.grid.j_nodes, q.grid.j_nodes):
            np.testing.assert_array_equal(a, b)

    def test_stream_and_dict(self, policy):
        buf = io.StringIO()
        save_policy(policy, buf)
        d = json.loads(buf.getvalue())
        assert d == json.loads(json.dumps(policy_to_dict(policy)))
        q = policy_from_dict(d)
        assert q.lookup_action(1, 20.0, 0.0) == policy.lookup_action(1, 20.0, 0.0)

    def test_byte_identical(self, policy):
        a, b = io.StringIO(), io.StringIO()
        save_policy(policy, a)
        save_policy(policy_from_dict(policy_to_dict(policy)), b)
        assert a.getvalue() == b.getvalue()

    def test_wrong_format(self, policy):
        d = policy_to_dict(policy)
        d["format"] = "something-else"
        with pytest.raises(ValueError):
            policy_from_dict(d)
