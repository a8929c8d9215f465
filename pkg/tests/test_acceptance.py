"""Acceptance gate: one test group per criterion, summarised at the end of the run."""

import json
import os
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import pytest

from groundlex.cli import main
from groundlex.datamodel import Catalog, EmbeddingSpace, Product, load_catalog
from groundlex.evalkit import analogy_candidates, gini, hit_rate, load_analogies, random_baseline
from groundlex.prodvec import TrainConfig, train
from groundlex.queryembed import ClickHistogram, RankConfig, UnembeddableQuery, embed_query
from groundlex.searchindex import build_index, search
from groundlex.synth import PopularityDistribution, SynthConfig, generate_synthetic_events, planted_cluster_sessions

from oracles import brute_hit_rate, gini_pairwise, scan_search, weighted_top_mean
from test_evalkit import random_instance


def criterion(number, title):
    return pytest.mark.criterion(number, title)


@contextmanager
def single_core():
    # Pin the process to one CPU so timing claims hold for a single core.
    if not hasattr(os, "sched_setaffinity"):
        yield
        return
    before = os.sched_getaffinity(0)
    os.sched_setaffinity(0, {min(before)})
    try:
        yield
    finally:
        os.sched_setaffinity(0, before)


# -- 1 ---------------------------------------------------------------------------

@criterion(1, "gini matches the pairwise formula (1e-12), worked cases exact, < 1 s")
def test_c1_gini(record_property):
    rng = np.random.default_rng(1)
    vectors = []
    while len(vectors) < 1000:
        xs = rng.integers(0, 50, size=int(rng.integers(1, 21))).tolist()
        if any(xs):
            vectors.append(xs)
    start = time.perf_counter()
    ours = [gini(xs) for xs in vectors]
    elapsed = time.perf_counter() - start
    worst = max(abs(g - gini_pairwise(xs)) for g, xs in zip(ours, vectors))
    record_property("detail", f"max err {worst:.1e}, {elapsed:.3f}s")
    assert worst <= 1e-12
    assert gini([7, 0, 0, 0]) == 0.75
    assert gini([10, 8, 0]) == 40 / 108
    assert elapsed < 1.0


# -- 2 ---------------------------------------------------------------------------

VOCAB = ["run", "trail", "shoe", "shoes", "ski", "tennis", "racket", "bag", "red", "blue", "pro", "x1"]


def random_catalog(rng):
    products = []
    for i in range(int(rng.integers(1, 101))):
        words = rng.choice(VOCAB, size=int(rng.integers(1, 8))).tolist()
        seps = rng.choice([" ", "-", ", ", "/"], size=len(words)).tolist()
        text = "".join(w.upper() if rng.random() < 0.1 else w for pair in zip(words, seps) for w in pair)
        products.append(Product(f"p{i:03d}", description=text))
    return Catalog(tuple(products))


@criterion(2, "search equals a brute-force scan for 200 queries, < 5 s")
def test_c2_search(record_property):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    nonempty = 0
    for _ in range(10):
        catalog = random_catalog(rng)
        index = build_index(catalog, ["description"])
        docs = {p.product_id: p.description for p in catalog}
        for _ in range(20):
            query = " ".join(rng.choice(VOCAB + ["golf"], size=int(rng.integers(1, 4))).tolist())
            limit = int(rng.integers(1, 60))
            got = search(index, query, limit)
            expected = scan_search(docs, query, limit)
            assert [pid for pid, _ in got] == [pid for pid, _ in expected], query
            np.testing.assert_allclose([s for _, s in got], [s for _, s in expected], rtol=1e-12, atol=1e-12)
            nonempty += bool(got)
    elapsed = time.perf_counter() - start
    record_property("detail", f"{nonempty}/200 non-empty, {elapsed:.2f}s")
    assert nonempty > 50
    assert elapsed < 5.0


# -- 3 ---------------------------------------------------------------------------

@criterion(3, "embed_query equals the sort-select-average oracle (1e-9); exact scale invariance")
def test_c3_query_embedding(record_property):
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(500):
        n_products, dim = int(rng.integers(1, 30)), int(rng.integers(1, 12))
        ids = [f"p{i}" for i in range(n_products)]
        space_ids = [p for p in ids if rng.random() < 0.8]
        space = EmbeddingSpace(space_ids, rng.normal(size=(len(space_ids), dim)), "product")
        chosen = rng.choice(ids, size=int(rng.integers(1, n_products + 1)), replace=False)
        counts = {str(p): int(rng.integers(1, 40)) for p in chosen}
        rank = int(rng.integers(1, 10))
        vectors = {k: [float(x) for x in space[k]] for k in space.keys}
        expected = weighted_top_mean(counts, vectors, rank)
        hist = ClickHistogram("q", counts)
        if expected is None:
            with pytest.raises(UnembeddableQuery):
                embed_query(hist, space, RankConfig(rank))
            continue
        got = embed_query(hist, space, RankConfig(rank))
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-9)
        factor = int(rng.integers(2, 1000))
        scaled = embed_query(ClickHistogram("q", {p: c * factor for p, c in counts.items()}), space, RankConfig(rank))
        np.testing.assert_array_equal(scaled, got)
        checked += 1
    record_property("detail", f"{checked} embedded, {500 - checked} unembeddable")
    assert checked > 400


# -- 4 ---------------------------------------------------------------------------

@criterion(4, "hit_rate equals the brute-force evaluator exactly; HR@5 <= HR@10")
@pytest.mark.parametrize("seed", range(100, 160))
def test_c4_hit_rate(seed):
    space, analogies, candidates = random_instance(seed)
    assert len(analogies) <= 50
    cutoffs = [5, 10]
    report = hit_rate(space, analogies, cutoffs, candidates)
    vectors = {k: [float(x) for x in space[k]] for k in space.keys}
    expected, coverage = brute_hit_rate(
        vectors, [(an.a, an.b, an.c, an.d, an.type_pair[1]) for an in analogies], cutoffs, candidates
    )
    assert report.hit_rate == expected
    assert report.coverage == coverage
    assert report.hit_rate[5] <= report.hit_rate[10]


# -- 5 ---------------------------------------------------------------------------

@criterion(5, "planted clusters: intra - inter cosine > 0.2, finite, bit-exact rerun, < 30 s")
def test_c5_trainer(record_property):
    start = time.perf_counter()
    sessions, cluster = planted_cluster_sessions(n_products=20, n_clusters=2, n_sessions=1000, seed=5)
    cfg = TrainConfig(dimension=16, epochs=10, seed=5)
    first, second = train(sessions, cfg), train(sessions, cfg)
    elapsed = time.perf_counter() - start
    unit = first.matrix / np.linalg.norm(first.matrix, axis=1, keepdims=True)
    sims = unit @ unit.T
    labels = np.array([cluster[k] for k in first.keys])
    same = labels[:, None] == labels[None, :]
    gap = sims[same & ~np.eye(len(labels), dtype=bool)].mean() - sims[~same].mean()
    record_property("detail", f"gap {gap:.3f}, {elapsed:.1f}s")
    assert len(first) == 20
    assert np.isfinite(first.matrix).all()
    assert first.matrix.tobytes() == second.matrix.tobytes() and first.keys == second.keys
    assert gap > 0.2
    assert elapsed < 30.0


# -- 6 and 7 ---------------------------------------------------------------------

def write_config(root, **values):
    out = root / "out"
    cfg = {
        "out": str(out),
        "catalog": str(out / "catalog.jsonl"),
        "sessions": str(out / "sessions.jsonl"),
        "clicks": str(out / "clicks.jsonl"),
        **values,
    }
    path = root / "config.json"
    path.write_text(json.dumps(cfg))
    return ["--config", str(path)], out


def evaluate_mode(args, out, mode, *extra):
    assert main(["embed-queries", *args, "--mode", mode, *extra]) == 0
    lexicon = out / f"query_vectors_{mode}.txt"
    report_dir = out / f"eval_{mode}"
    assert main(["evaluate", *args, "--lexicon", str(lexicon), "--name", mode, "--out", str(report_dir),
                 "--analogies", str(out / "analogies_brand_activity.jsonl")]) == 0
    report = json.loads((report_dir / "eval_report.json").read_text())
    space = EmbeddingSpace.load(lexicon, "query")
    analogies = load_analogies(out / "analogies_brand_activity.jsonl")
    candidates = analogy_candidates(load_catalog(out / "catalog.jsonl"), analogies)
    report["baseline"] = random_baseline(space, analogies, candidates, cutoff=1)
    open_vocab = hit_rate(space, analogies, [1, 10], candidates, open_vocabulary=True)
    report["open_hr1"] = open_vocab.hit_rate[1]
    return report


SHOP_6 = dict(n_brands=8, n_types=5, products_per_cell=4, n_sessions=50_000, activity_purity=1.0,
              simulations_per_word=500, rank=5, gini_percentile=75.0, samples_per_entity=10)


@pytest.fixture(scope="module")
def shop6(tmp_path_factory):
    root = tmp_path_factory.mktemp("shop6")
    args, out = write_config(root, **SHOP_6)
    start = time.perf_counter()
    for cmd in ("simulate-shop", "train-products", "build-analogies"):
        assert main([cmd, *args]) == 0
    return root, args, out, time.perf_counter() - start


@pytest.fixture(scope="module")
def merged6(shop6):
    root, args, out, setup = shop6
    start = time.perf_counter()
    report = evaluate_mode(args, out, "merged")
    return report, setup + time.perf_counter() - start


@pytest.mark.slow
@criterion(6, "shop pipeline: HR@10 >= 5x random baseline, coverage >= 0.9, < 10 min")
def test_c6_grounding(merged6, record_property):
    report, elapsed = merged6
    hr10, baseline = report["hit_rate"]["10"], report["baseline"]
    record_property(
        "detail",
        f"HR@10 {hr10:.3f} vs 5x{baseline:.3f}, CV {report['coverage']:.3f}, "
        f"n={report['n_analogies']}, open-vocab HR@1 {report['open_hr1']:.3f}, {elapsed:.0f}s",
    )
    assert report["n_analogies"] > 0
    assert hr10 >= 5 * baseline
    assert report["coverage"] >= 0.9
    assert elapsed < 600


@pytest.mark.slow
@criterion(7, "synthetic-only lexicon with empty real log: HR@10 within 30% of merged")
def test_c7_zero_real_data(shop6, merged6, record_property):
    root, args, out, _ = shop6
    empty = root / "no_clicks.jsonl"
    empty.write_text("")
    synthetic = evaluate_mode(args, out, "synthetic", "--clicks", str(empty))
    merged = merged6[0]
    hr_s, hr_m = synthetic["hit_rate"]["10"], merged["hit_rate"]["10"]
    record_property("detail", f"synthetic {hr_s:.3f} vs merged {hr_m:.3f}, open-vocab HR@1 {synthetic['open_hr1']:.3f}")
    assert hr_m > 0
    assert abs(hr_s - hr_m) / hr_m <= 0.30


# -- 8 ---------------------------------------------------------------------------

@criterion(8, "sampler 9:1 split at N=10000 is 0.9 +/- 0.02")
def test_c8_sampler(record_property):
    catalog = Catalog((Product("heavy", description="boots"), Product("light", description="boots")))
    dist = PopularityDistribution({"heavy": 9.0, "light": 1.0})
    log, _ = generate_synthetic_events(["boots"], build_index(catalog), dist, SynthConfig(10_000, seed=8))
    assert len(log) == 10_000
    share = Counter(e.product_id for e in log)["heavy"] / len(log)
    record_property("detail", f"share {share:.4f}")
    assert abs(share - 0.9) <= 0.02


# -- 9 ---------------------------------------------------------------------------

def snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@criterion(9, "every subcommand reruns byte-identically")
def test_c9_determinism(tmp_path, record_property):
    args, out = write_config(tmp_path, n_sessions=3000, epochs=3, dimension=16, simulations_per_word=100)
    triplets = tmp_path / "triplets.jsonl"
    triplets.write_text(json.dumps({"anchor": "tennis", "option_a": "altura", "option_b": "shoes", "human_choice": "a"}))
    commands = [
        ["simulate-shop"],
        ["train-products"],
        ["embed-queries", "--mode", "real"],
        ["embed-queries", "--mode", "synthetic"],
        ["embed-queries", "--mode", "merged"],
        ["build-analogies", "--pair", "brand:activity"],
        ["evaluate", "--triplets", str(triplets), "--cutoffs", "1", "5", "10"],
    ]
    files = 0
    for command in commands:
        assert main([*command, *args]) == 0
        before = snapshot(out)
        assert main([*command, *args]) == 0
        after = snapshot(out)
        assert before.keys() == after.keys()
        changed = [name for name in before if before[name] != after[name]]
        assert changed == [], f"{command[0]} changed {changed}"
        files = len(after)
    record_property("detail", f"{len(commands)} commands, {files} files")


# -- 10 --------------------------------------------------------------------------

@pytest.mark.slow
@criterion(10, "10k products / 100k sessions full pipeline on one core < 10 min")
def test_c10_efficiency(tmp_path, record_property):
    args, out = write_config(tmp_path, n_brands=50, n_types=50, products_per_cell=4, n_sessions=100_000)
    timings = {}
    with single_core():
        for command in (["simulate-shop"], ["train-products"], ["embed-queries", "--mode", "merged"],
                        ["build-analogies"], ["evaluate"]):
            start = time.perf_counter()
            assert main([*command, *args]) == 0
            timings[command[0]] = time.perf_counter() - start
    total = sum(timings.values())
    header = (out / "product_vectors.txt").read_text().split("\n", 1)[0]
    record_property("detail", f"{total:.0f}s total, train {timings['train-products']:.0f}s, vectors {header}")
    assert len(load_catalog(out / "catalog.jsonl")) == 10_000
    assert total < 600
