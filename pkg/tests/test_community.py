import itertools
import random

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from bss_expand.community import (
    LouvainConfig,
    detect_all,
    louvain,
    modularity,
    read_partitions,
    write_communities,
    write_detect_meta,
)
from bss_expand.errors import ConfigError, DataError
from bss_expand.graph import AGGREGATE, Granularity, UndirectedProjection
from oracles import direct_modularity


def proj(edges, nodes=None, g=Granularity.T_NULL):
    w = {}
    for u, v, x in edges:
        k = (u, v) if u <= v else (v, u)
        w[k] = w.get(k, 0.0) + float(x)
    if nodes is None:
        nodes = sorted({n for e in w for n in e})
    return UndirectedProjection(tuple(nodes), dict(sorted(w.items())), g, AGGREGATE)


def clique(prefix, n, w=1.0):
    names = [f"{prefix}{k}" for k in range(n)]
    return [(a, b, w) for a, b in itertools.combinations(names, 2)]


def karate():
    G = nx.karate_club_graph()
    return G, proj([(f"n{u:02d}", f"n{v:02d}", 1.0) for u, v in G.edges()])


def random_projection(rng, n=None):
    n = n or rng.randint(2, 30)
    nodes = [f"v{k:02d}" for k in range(n)]
    edges = []
    for a in range(n):
        for b in range(a, n):
            if rng.random() < 0.3:
                edges.append((nodes[a], nodes[b], rng.uniform(0.1, 10)))
    if not edges:
        edges.append((nodes[0], nodes[-1], 1.0))
    return proj(edges, nodes)


def test_one_community_is_zero():
    rng = random.Random(1)
    for _ in range(20):
        p = random_projection(rng)
        assert modularity(p, {n: 0 for n in p.nodes}) == 0.0


def test_two_triangles_half():
    p = proj(clique("a", 3) + clique("b", 3))
    assert modularity(p, {n: 0 if n[0] == "a" else 1 for n in p.nodes}) == 0.5


def test_against_direct_formula():
    rng = random.Random(2)
    for _ in range(100):
        p = random_projection(rng)
        k = rng.randint(1, 6)
        a = {n: rng.randrange(k) for n in p.nodes}
        q = modularity(p, a)
        assert abs(q - direct_modularity(list(p.nodes), p.weights, a)) <= 1e-12
        assert -1.0 <= q <= 1.0
        res = rng.uniform(0.3, 2.0)
        assert abs(modularity(p, a, res) - direct_modularity(list(p.nodes), p.weights, a, res)) <= 1e-12


def test_against_networkx_modularity():
    rng = random.Random(3)
    for _ in range(20):
        p = random_projection(rng)
        a = {n: rng.randrange(3) for n in p.nodes}
        G = nx.Graph()
        G.add_nodes_from(p.nodes)
        for (u, v), w in p.weights.items():
            G.add_edge(u, v, weight=w)
        comms = [{n for n in p.nodes if a[n] == c} for c in set(a.values())]
        assert modularity(p, a) == pytest.approx(nx.community.modularity(G, comms, weight="weight"), abs=1e-12)


def test_empty_graph():
    p = UndirectedProjection(("a", "b"), {})
    with pytest.raises(DataError, match="empty graph"):
        modularity(p, {"a": 0, "b": 0})
    with pytest.raises(DataError):
        louvain(p)


def test_two_four_cliques():
    p = proj(clique("a", 4) + clique("b", 4))
    part = louvain(p, LouvainConfig(seed=3))
    assert sorted(map(sorted, part.communities())) == [[f"a{k}" for k in range(4)], [f"b{k}" for k in range(4)]]
    assert part.modularity == 0.5
    assert sorted(set(part.assignment.values())) == [0, 1]


def test_karate():
    G, p = karate()
    for seed in range(5):
        part = louvain(p, LouvainConfig(seed=seed))
        assert 0.40 <= part.modularity <= 0.43
        ref = nx.community.louvain_communities(G, weight=None, seed=seed)
        q_ref = nx.community.modularity(G, ref, weight=None)
        assert 0.40 <= q_ref <= 0.43
        assert abs(part.modularity - q_ref) < 0.02


@pytest.mark.parametrize("seed", range(10))
def test_per_pass_monotone_and_reported_q(seed):
    rng = random.Random(seed)
    graphs = [karate()[1], random_projection(rng, 30), proj(clique("a", 5) + clique("b", 6) + [("a0", "b0", 1)])]
    for p in graphs:
        part = louvain(p, LouvainConfig(seed=seed))
        hist = (louvain_singletons_q(p),) + part.pass_modularity
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
        assert abs(part.modularity - direct_modularity(list(p.nodes), p.weights, part.assignment)) <= 1e-9
        assert part.modularity >= 0.0 - 1e-12
        assert part.modularity >= louvain_singletons_q(p) - 1e-12
        ids = sorted(set(part.assignment.values()))
        assert ids == list(range(len(ids)))


def louvain_singletons_q(p):
    return modularity(p, {n: k for k, n in enumerate(sorted(p.nodes))})


def test_seed_determinism():
    rng = random.Random(4)
    p = random_projection(rng, 30)
    for seed in (0, 1, 99):
        assert louvain(p, LouvainConfig(seed=seed)) == louvain(p, LouvainConfig(seed=seed))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3, 7, 1000, 0.5, 0.125]))
def test_scale_invariance(seed, k):
    p = random_projection(random.Random(seed), 25)
    a = louvain(p, LouvainConfig(seed=seed))
    b = louvain(p.scaled(k), LouvainConfig(seed=seed))
    assert a.assignment == b.assignment
    assert abs(a.modularity - b.modularity) <= 1e-9
    rnd = {n: int(n[1:]) % 3 for n in p.nodes}
    assert abs(modularity(p, rnd) - modularity(p.scaled(k), rnd)) <= 1e-9


def planted(rng: np.random.Generator, n=60, blocks=4, p_in=0.3, p_out=0.01):
    labels = [k * blocks // n for k in range(n)]
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < (p_in if labels[a] == labels[b] else p_out):
                edges.append((f"x{a:02d}", f"x{b:02d}", 1.0))
    return proj(edges, [f"x{k:02d}" for k in range(n)]), labels


def test_planted_partition_ari():
    good = 0
    for seed in range(10):
        p, truth = planted(np.random.default_rng(seed))
        part = louvain(p, LouvainConfig(seed=seed))
        got = [part.assignment[f"x{k:02d}"] for k in range(60)]
        if adjusted_rand_score(truth, got) >= 0.9:
            good += 1
    assert good >= 9


def test_detect_all_same_graph_same_partition():
    _, p = karate()
    projs = {g: UndirectedProjection(p.nodes, p.weights, g, AGGREGATE) for g in Granularity}
    parts = detect_all(projs, LouvainConfig(seed=5))
    assert [x.granularity for x in parts] == list(Granularity)
    assert parts[0].assignment == parts[1].assignment == parts[2].assignment


def test_config_validation():
    for bad in (dict(resolution=0), dict(resolution=-1.0), dict(min_gain=0), dict(max_passes=0), dict(max_passes=1.5)):
        with pytest.raises(ConfigError):
            LouvainConfig(**bad)


def test_max_passes_respected():
    _, p = karate()
    assert louvain(p, LouvainConfig(seed=1, max_passes=1)).passes == 1


def test_resolution_changes_count():
    _, p = karate()
    lo = louvain(p, LouvainConfig(seed=1, resolution=0.3)).num_communities
    hi = louvain(p, LouvainConfig(seed=1, resolution=3.0)).num_communities
    assert lo < hi


def test_outputs_round_trip(tmp_path):
    _, p = karate()
    parts = detect_all({Granularity.T_NULL: p}, LouvainConfig(seed=2, resolution=1.25, min_gain=1e-6, max_passes=7))
    write_communities(tmp_path / "c.csv", parts)
    write_detect_meta(tmp_path / "m.csv", parts)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "granularity,strategy,station_id,community_id"
    header = (tmp_path / "m.csv").read_text().splitlines()[0].split(",")
    assert header[:6] == ["granularity", "strategy", "seed", "num_communities", "modularity", "passes"]
    assert {"resolution", "min_gain", "max_passes"} <= set(header)
    back = read_partitions(tmp_path / "c.csv", tmp_path / "m.csv")[0]
    assert back.assignment == parts[0].assignment
    assert back.modularity == parts[0].modularity
    assert back.config == parts[0].config
