import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrpmix.chain import ChainView
from lrpmix.flow import (
    CouplingError, ErCoupling, IntervalPartition, PartitionError, build_flow, check_flow, congestion,
    contract, couple_er, crossing_probabilities, er_probability, flow_mixing_bound, flow_pipeline,
    geodesics, interval_path, loads_by_edge, make_partition, reference_edge_loads, route, route_table,
)
from lrpmix.model import ModelParams, cyclic_distance, from_edges, sample_graph
from lrpmix.spectral import second_eigenvalue


def bfs_dist(graph, src, allowed):
    dist = {src: 0}
    dq = deque([src])
    while dq:
        u = dq.popleft()
        for v, _ in graph.neighbors(u):
            if v in allowed and v not in dist:
                dist[v] = dist[u] + 1
                dq.append(v)
    return dist


def test_partition_example():
    part = make_partition(ModelParams(1024, 1.5, 1.0), alpha=4.0)
    assert part.xi == pytest.approx(4 * math.log(1024) / 2**1.5, rel=1e-15)
    assert part.xi == pytest.approx(9.8026, abs=1e-4)
    assert (part.L, part.k, part.ell) == (314, 3, 82)
    assert list(part.sizes()) == [314, 314, 396]
    assert not part.asymptotic_ok


@given(st.integers(64, 5000), st.floats(1.05, 1.95), st.floats(0.3, 5.0), st.floats(0.2, 6.0))
def test_partition_covers_cycle(n, s, beta, alpha):
    try:
        part = make_partition(ModelParams(n, s, beta), alpha)
    except PartitionError:
        return
    sizes = part.sizes()
    assert sizes.sum() == n
    assert np.all(sizes[:-1] == part.L)
    assert sizes[-1] == part.L + part.ell
    assert part.k >= 2 and 0 <= part.ell < part.L
    assert np.array_equal(part.labels(), np.repeat(np.arange(part.k), sizes))


def test_partition_without_remainder():
    for alpha in np.linspace(0.5, 3.0, 400):
        part = make_partition(ModelParams(960, 1.5, 1.0), float(alpha))
        if part.ell == 0:
            assert np.all(part.sizes() == part.L)
            return
    pytest.fail("no divisible case found in the alpha grid")


def test_partition_errors():
    with pytest.raises(PartitionError):
        make_partition(ModelParams(256, 2.0, 1.0))
    with pytest.raises(PartitionError):
        make_partition(ModelParams(128, 1.5, 1.0), alpha=4.0)  # k = 1


def test_contract_pure_cycle():
    n = 600
    g = from_edges(n, [], ModelParams(n, 1.5, 1.0))
    part = make_partition(g.params, alpha=1.0)
    gamma = contract(g, part)
    k = part.k
    assert gamma.edges == {(i, i + 1) for i in range(k - 1)} | {(0, k - 1)}


@pytest.mark.parametrize("seed", range(3))
def test_witness_is_smallest_crossing_edge(lrp, seed):
    g = lrp(400, seed=seed)
    part = make_partition(g.params, alpha=1.0)
    lab = part.labels()
    gamma = contract(g, part)
    crossing = {}
    for x in range(g.n):
        for y, _ in g.neighbors(x):
            if x < y and lab[x] != lab[y]:
                key = (int(lab[x]), int(lab[y]))
                crossing.setdefault(key, []).append((x, y))
    assert {tuple(sorted(k)) for k in crossing} == gamma.edges
    for (i, j), cands in crossing.items():
        x, y = min(cands)
        assert gamma.witness[(i, j)] == (x, y)
        assert gamma.witness[(j, i)] == (y, x)
        assert lab[x] == i and lab[y] == j


def test_crossing_probabilities_brute_force():
    params = ModelParams(90, 1.4, 0.6)
    part = make_partition(params, alpha=0.5)
    q = crossing_probabilities(part, params)
    iv = part.intervals
    for i in range(part.k):
        for j in range(i + 1, part.k):
            if j == i + 1 or (i == 0 and j == part.k - 1):
                assert q[i, j] == 1.0
                continue
            lam = sum(cyclic_distance(x, y, 90) ** -1.4 for x in iv[i] for y in iv[j])
            assert q[i, j] == pytest.approx(1 - math.exp(-0.6 * lam), rel=1e-12)
            assert q[j, i] == q[i, j]


@pytest.mark.slow
def test_gamma_frequency_matches_q():
    n, alpha = 512, 1.0
    part = make_partition(ModelParams(n, 1.5, 1.0), alpha)
    q = crossing_probabilities(part, ModelParams(n, 1.5, 1.0))
    p = er_probability(alpha, part.k)
    seeds = 50
    hits = np.zeros((part.k, part.k))
    for seed in range(seeds):
        gamma = contract(sample_graph(ModelParams(n, 1.5, 1.0, seed)), part)
        for i, j in gamma.edges:
            hits[i, j] += 1
    for i in range(part.k):
        for j in range(i + 2, part.k):
            if i == 0 and j == part.k - 1:
                continue
            assert q[i, j] >= p
            se = math.sqrt(q[i, j] * (1 - q[i, j]) / seeds)
            assert abs(hits[i, j] / seeds - q[i, j]) <= 4 * se + 1e-9


def _complete_gamma(k):
    from lrpmix.flow import ContractedGraph

    return ContractedGraph(k, {(i, j) for i in range(k) for j in range(i + 1, k)}, {})


def test_coupling_edge_cases():
    k = 6
    gamma = _complete_gamma(k)
    gamma.edges.discard((1, 3))
    q = np.full((k, k), 0.3)
    assert couple_er(gamma, q, 0.0, 1).edges == set()
    assert couple_er(gamma, q, 0.3, 1).edges == gamma.edges
    with pytest.raises(CouplingError) as err:
        couple_er(gamma, q, 0.5, 1)
    assert err.value.p == 0.5 and len(err.value.offenders) == 15


def test_coupling_marginal_monte_carlo():
    k, p, reps = 16, 0.1, 100_000
    rng = np.random.default_rng(2024)
    q = rng.uniform(p, 1.0, size=(k, k))
    q = np.triu(q, 1) + np.triu(q, 1).T
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    counts = dict.fromkeys(pairs, 0)
    crng = np.random.default_rng(7)
    for _ in range(reps):
        # Gamma itself is resampled with the q marginals
        present = crng.random(len(pairs)) < [q[i, j] for i, j in pairs]
        from lrpmix.flow import ContractedGraph

        gamma = ContractedGraph(k, {e for e, keep in zip(pairs, present) if keep}, {})
        kept = couple_er(gamma, q, p, crng).edges
        assert kept <= gamma.edges
        for e in kept:
            counts[e] += 1
    se = math.sqrt(p * (1 - p) / reps)
    freqs = np.array([counts[e] / reps for e in pairs])
    assert np.all(np.abs(freqs - p) <= 3 * se), np.abs(freqs - p).max() / se


@given(st.integers(0, 10**9), st.floats(0.5, 2.0))
def test_coupling_is_subgraph(seed, alpha):
    params = ModelParams(300, 1.5, 1.0, seed)
    part = make_partition(params, alpha)
    gamma = contract(sample_graph(params), part)
    c = couple_er(gamma, crossing_probabilities(part, params), er_probability(alpha, part.k), seed)
    assert c.edges <= gamma.edges


def test_geodesics_on_pure_cycle():
    n = 500
    g = from_edges(n, [], ModelParams(n, 1.5, 1.0))
    part = make_partition(g.params, alpha=1.0)
    geo = geodesics(g, part)
    assert geo.diam == [len(r) - 1 for r in part.intervals]
    for j, r in enumerate(part.intervals):
        assert interval_path(geo, j, r[3], r[3]) == [r[3]]
        assert interval_path(geo, j, r[0], r[-1]) == list(r)


@pytest.mark.parametrize("seed", range(3))
def test_geodesics_are_shortest_and_internal(lrp, seed):
    g = lrp(300, seed=seed)
    part = make_partition(g.params, alpha=1.0)
    geo = geodesics(g, part)
    for j, r in enumerate(part.intervals):
        allowed = set(r)
        for x in (r[0], r[len(r) // 2], r[-1]):
            dist = bfs_dist(g, x, allowed)
            for y in r:
                path = interval_path(geo, j, x, y)
                assert len(path) - 1 == dist[y]
                assert set(path) <= allowed
                assert all(g.multiplicity(a, b) > 0 for a, b in zip(path[:-1], path[1:]))


def test_delta_polylog_envelope():
    for seed in range(10):
        g = sample_graph(ModelParams(512, 1.5, 1.0, seed))
        geo = geodesics(g, make_partition(g.params, alpha=2.0))
        assert geo.Delta <= math.log(512) ** 4


def test_route_table_ties_and_disconnection():
    routes = route_table(4, {(0, 1), (1, 2), (2, 3), (0, 3)})
    assert routes[(0, 2)] == [0, 1, 2]
    assert routes[(1, 3)] == [1, 0, 3]
    assert routes[(2, 0)] == [2, 1, 0]
    assert routes[(3, 1)] == [3, 0, 1]
    assert route_table(4, {(0, 1), (2, 3)}) is None


def _four_cycle_plan():
    params = ModelParams(4, 1.5, 1.0)
    g = from_edges(4, [], params)
    part = make_partition(params, alpha=0.5)
    assert part.k == 4 and part.L == 1
    gamma = contract(g, part)
    coupling = ErCoupling(0.0, set(gamma.edges), crossing_probabilities(part, params))
    return g, build_flow(g, part, gamma, coupling, geodesics(g, part))


def test_four_cycle_congestion_by_hand():
    g, plan = _four_cycle_plan()
    assert not plan.degraded
    # 8 adjacent commodities of length 1, 4 opposite ones of length 2, each of weight 1/16
    loads = loads_by_edge(plan)
    assert loads[(0, 1)] == pytest.approx(5 / 16)
    assert loads[(1, 0)] == pytest.approx(5 / 16)
    assert loads[(1, 2)] == pytest.approx(3 / 16)
    assert sum(loads.values()) == pytest.approx((8 * 1 + 4 * 4) / 16)
    ref = reference_edge_loads(plan)
    assert ref.keys() == loads.keys()
    assert all(ref[e] == pytest.approx(loads[e], abs=1e-15) for e in ref)
    chain = ChainView(g)
    assert check_flow(plan).max_weight_error <= 1e-15
    rho = congestion(plan, chain)
    # |E| = 8 oriented edges, so pi(a) P(a, b) = 1 / 16 and rho = 16 * 5 / 16
    assert rho == pytest.approx(5.0)
    assert 1 / second_eigenvalue(chain).gap <= rho


def test_two_interval_fixture():
    params = ModelParams(12, 1.5, 1.0)
    g = from_edges(12, [(1, 9), (2, 4)], params)
    part = IntervalPartition(12, 6, 1.0, 1.0, 2, 0, (0, 6, 12), False)
    gamma = contract(g, part)
    assert gamma.witness[(0, 1)] == (0, 11)
    coupling = ErCoupling(0.0, set(gamma.edges), crossing_probabilities(part, params))
    plan = build_flow(g, part, gamma, coupling, geodesics(g, part))
    pi = plan.stationary
    expect = 0.0
    for x in range(6):
        dx = bfs_dist(g, x, set(range(6)))[0]
        for y in range(6, 12):
            path = route(plan, x, y)
            assert (0, 11) in zip(path[:-1], path[1:])
            dy = bfs_dist(g, 11, set(range(6, 12)))[y]
            expect += 2 * pi[x] * pi[y] * (dx + 1 + dy)
    loads = loads_by_edge(plan)
    assert loads[(0, 11)] + loads[(11, 0)] == pytest.approx(expect, rel=1e-13)


@pytest.mark.parametrize("n,alpha,seed", [(128, 1.0, 0), (128, 2.0, 1), (200, 1.0, 2), (256, 4.0, 3)])
def test_flow_validity_and_loads(n, alpha, seed):
    g = sample_graph(ModelParams(n, 1.5, 1.0, seed))
    plan = flow_pipeline(g, alpha)
    chk = check_flow(plan)
    assert chk.max_weight_error <= 1e-12
    assert chk.ok
    assert chk.max_path_len == plan.max_path_len
    ref = reference_edge_loads(plan)
    got = loads_by_edge(plan)
    assert ref.keys() == got.keys()
    assert max(abs(ref[e] - got[e]) for e in ref) <= 1e-14
    for a, b in ref:
        assert g.multiplicity(a, b) > 0


def test_same_interval_routes_are_geodesic(lrp):
    g = lrp(256, seed=5)
    plan = flow_pipeline(g, 1.0)
    for j, r in enumerate(plan.part.intervals[:3]):
        allowed = set(r)
        x = r[1]
        dist = bfs_dist(g, x, allowed)
        for y in r:
            if y != x:
                assert len(route(plan, x, y)) - 1 == dist[y]
    assert plan.weight(3, 3) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_sinclair_direction(seed):
    g = sample_graph(ModelParams(256, 1.5, 1.0, seed))
    chain = ChainView(g)
    plan = flow_pipeline(g, 4.0)
    assert check_flow(plan).max_weight_error <= 1e-12
    assert 1 / second_eigenvalue(chain).gap <= congestion(plan, chain) + 1e-9


def test_degraded_flag_tracks_connectivity(lrp):
    for seed in range(6):
        plan = flow_pipeline(lrp(300, seed=seed), 1.0)
        params = plan.graph.params
        part = plan.part
        c = couple_er(contract(plan.graph, part), crossing_probabilities(part, params), er_probability(1.0, part.k), params.seed)
        assert plan.degraded == (route_table(part.k, c.edges) is None)
        assert plan.route_edges <= contract(plan.graph, part).edges


def test_diagnostics_echo_inputs(lrp):
    g = lrp(256, seed=1)
    chain = ChainView(g)
    plan = flow_pipeline(g, 2.0)
    d = flow_mixing_bound(plan, chain, rho=123.5)
    assert d.rho == 123.5
    assert (d.L, d.k, d.delta_max, d.degraded) == (plan.part.L, plan.part.k, plan.geo.Delta, plan.degraded)
    assert d.max_degree == g.degree.max()
    assert d.n_pow == pytest.approx(256**0.5)
    assert flow_mixing_bound(plan, chain).rho == congestion(plan, chain)


def test_gamma_prime_degree_statistic():
    ok = 0
    runs = 0
    for n in (1024, 2048):
        for seed in range(10):
            params = ModelParams(n, 1.5, 1.0, seed)
            part = make_partition(params, 4.0)
            gamma = contract(sample_graph(params), part)
            c = couple_er(gamma, crossing_probabilities(part, params), er_probability(4.0, part.k), seed)
            ok += c.max_degree(part.k) <= 6 * math.log(n)
            runs += 1
    assert ok / runs >= 0.9
