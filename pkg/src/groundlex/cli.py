"""Command-line driver for the query-lexicon pipeline.

Subcommands: simulate-shop, train-products, embed-queries, build-analogies
and evaluate.

Settings come from one flat JSON config file; command-line flags win.
Every command writes into a staging directory and only moves files into
``--out`` once all of them are complete.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any, Iterator

from . import evalkit, prodvec, queryembed, synth
from .datamodel import (
    TAXONOMY_FIELDS,
    DataError,
    EmbeddingSpace,
    IngestionReport,
    load_catalog,
    load_click_log,
    load_sessions,
    save_catalog,
    save_click_log,
    save_sessions,
    write_report,
)
from .searchindex import build_index
from .seeds import derive_seed

log = logging.getLogger("groundlex")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "out",
    "threads": 1,
    "catalog": None,
    "sessions": None,
    "clicks": None,
    "words": None,
    "product_vectors": None,
    "lexicon": None,
    "analogies": None,
    "triplets": None,
    "type_pairs": [["brand", "activity"]],
    "cutoffs": [5, 10],
    "open_vocabulary": False,
    "name": "model",
}


class ConfigError(ValueError):
    pass


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - {"seed"}


def _nested_fields() -> dict[type, set[str]]:
    return {
        prodvec.TrainConfig: _field_names(prodvec.TrainConfig) - {"workers"},
        queryembed.RankConfig: _field_names(queryembed.RankConfig),
        synth.SynthConfig: _field_names(synth.SynthConfig),
        evalkit.AnalogyGenConfig: _field_names(evalkit.AnalogyGenConfig),
        synth.ShopSpec: _field_names(synth.ShopSpec),
    }


@dataclasses.dataclass
class PipelineConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def out(self) -> Path:
        return Path(self.values["out"])

    def module_seed(self, module: str) -> int:
        return derive_seed(self.seed, module)

    def _build(self, cls, module: str, **extra):
        kwargs = {k: self.values[k] for k in _nested_fields()[cls] if k in self.values}
        try:
            return cls(seed=self.module_seed(module), **kwargs, **extra)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {cls.__name__}: {exc}") from None

    def train(self) -> prodvec.TrainConfig:
        return self._build(prodvec.TrainConfig, "prodvec", workers=int(self.values["threads"]))

    def rank(self) -> queryembed.RankConfig:
        kwargs = {k: self.values[k] for k in _nested_fields()[queryembed.RankConfig] if k in self.values}
        try:
            return queryembed.RankConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid RankConfig: {exc}") from None

    def synth(self) -> synth.SynthConfig:
        return self._build(synth.SynthConfig, "synth")

    def analogy(self) -> evalkit.AnalogyGenConfig:
        return self._build(evalkit.AnalogyGenConfig, "evalkit")

    def shop(self) -> synth.ShopSpec:
        return self._build(synth.ShopSpec, "shop")

    def path(self, key: str, default_name: str | None = None, required: bool = True) -> Path | None:
        value = self.values.get(key)
        if value is None and default_name is not None:
            value = self.out / default_name
        if value is None:
            if required:
                raise ConfigError(f"missing required path '{key}'")
            return None
        path = Path(value)
        if required and not path.is_file():
            raise ConfigError(f"{key} file not found: {path}")
        return path


def load_config(path: str | None, overrides: dict[str, Any]) -> PipelineConfig:
    values = dict(DEFAULTS)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(DEFAULTS).union(*_nested_fields().values())
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if int(values["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    return PipelineConfig(values)


@contextlib.contextmanager
def staged_outputs(out: Path) -> Iterator[Path]:
    """Yield a staging directory; move its files into ``out`` only on success."""
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        yield stage
        for item in sorted(stage.iterdir()):
            item.replace(out / item.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# -- subcommands ---------------------------------------------------------------

def cmd_simulate_shop(cfg: PipelineConfig) -> list[str]:
    spec = cfg.shop()
    shop = synth.generate_synthetic_shop(spec)
    with staged_outputs(cfg.out) as stage:
        save_catalog(shop.catalog, stage / "catalog.jsonl")
        save_sessions(shop.sessions, stage / "sessions.jsonl")
        save_click_log(shop.clicks, stage / "clicks.jsonl")
        (stage / "ground_truth.json").write_text(
            json.dumps(shop.ground_truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        report = IngestionReport("simulate-shop", loaded=len(shop.catalog))
        report.notes.append(f"sessions: {len(shop.sessions)}; clicks: {len(shop.clicks)}")
        write_report([report], stage / "shop_report.txt")
    return ["catalog.jsonl", "sessions.jsonl", "clicks.jsonl", "ground_truth.json", "shop_report.txt"]


def cmd_train_products(cfg: PipelineConfig) -> list[str]:
    sessions_path = cfg.path("sessions")
    catalog_path = cfg.path("catalog", required=False)
    train_cfg = cfg.train()
    if train_cfg.workers > 1:
        print(f"warning: --threads {train_cfg.workers} makes training non-deterministic", file=sys.stderr)
    catalog = load_catalog(catalog_path) if catalog_path and catalog_path.is_file() else None
    sessions = load_sessions(sessions_path, catalog)
    space = prodvec.train(sessions, train_cfg)
    reports = [r for r in (catalog.report if catalog else None, sessions.report) if r is not None]
    losses = IngestionReport("training", loaded=len(space))
    losses.notes.extend(f"epoch {i + 1} loss {v:.6f}" for i, v in enumerate(space.meta["epoch_losses"]))
    with staged_outputs(cfg.out) as stage:
        space.save(stage / "product_vectors.txt")
        write_report(reports + [losses], stage / "ingestion_report.txt")
    return ["product_vectors.txt", "ingestion_report.txt"]


def default_words(catalog) -> list[str]:
    return sorted({label for f in TAXONOMY_FIELDS for label in catalog.labels(f)})


def cmd_embed_queries(cfg: PipelineConfig, mode: str) -> list[str]:
    products_path = cfg.path("product_vectors", "product_vectors.txt")
    logs = []
    reports: list[IngestionReport] = []
    skipped: list[str] = []
    if mode in ("real", "merged"):
        clicks = load_click_log(cfg.path("clicks"), "real")
        logs.append(clicks)
        reports.append(clicks.report)
    if mode in ("synthetic", "merged"):
        catalog_path, sessions_path = cfg.path("catalog"), cfg.path("sessions")
        words_path = cfg.path("words", required=False)
        if words_path is not None and not words_path.is_file():
            raise ConfigError(f"words file not found: {words_path}")
        catalog = load_catalog(catalog_path)
        sessions = load_sessions(sessions_path, catalog)
        reports += [catalog.report, sessions.report]
        if words_path is not None:
            words = [w.strip() for w in words_path.read_text(encoding="utf-8").splitlines() if w.strip()]
        else:
            words = default_words(catalog)
        popularity = synth.estimate_popularity(sessions, catalog)
        synthetic, skipped = synth.generate_synthetic_events(words, build_index(catalog), popularity, cfg.synth())
        logs.append(synthetic)
    products = EmbeddingSpace.load(products_path, "product")
    lexicon, omitted = queryembed.build_lexicon(queryembed.merge_logs(*logs), products, cfg.rank())
    summary = IngestionReport(f"embed-queries ({mode})", loaded=len(lexicon), dropped=len(omitted))
    summary.warnings += [f"skipped word (no search result): {w}" for w in skipped]
    summary.warnings += [f"omitted query (no embedded product): {q}" for q in omitted]
    vectors_name, report_name = f"query_vectors_{mode}.txt", f"embed_report_{mode}.txt"
    with staged_outputs(cfg.out) as stage:
        lexicon.save(stage / vectors_name)
        write_report(reports + [summary], stage / report_name)
    return [vectors_name, report_name]


def _parse_pair(pair) -> tuple[str, str]:
    if isinstance(pair, str):
        pair = pair.split(":")
    pair = tuple(pair)
    if len(pair) != 2 or any(f not in TAXONOMY_FIELDS for f in pair):
        raise ConfigError(f"invalid type pair {pair!r}; fields must be among {TAXONOMY_FIELDS}")
    return pair


def cmd_build_analogies(cfg: PipelineConfig, type_pairs=None) -> list[str]:
    pairs = [_parse_pair(p) for p in (type_pairs or cfg["type_pairs"])]
    catalog = load_catalog(cfg.path("catalog"))
    gen_cfg = cfg.analogy()
    names = []
    with staged_outputs(cfg.out) as stage:
        for pair in pairs:
            analogies = evalkit.generate_analogies(catalog, pair, gen_cfg)
            name = f"analogies_{pair[0]}_{pair[1]}.jsonl"
            evalkit.save_analogies(analogies, stage / name)
            names.append(name)
    return names


def cmd_evaluate(cfg: PipelineConfig) -> list[str]:
    lexicon_path = cfg.path("lexicon", "query_vectors_merged.txt")
    analogy_paths = cfg["analogies"]
    if not analogy_paths:
        analogy_paths = sorted(str(p) for p in cfg.out.glob("analogies_*.jsonl"))
    if isinstance(analogy_paths, str):
        analogy_paths = [analogy_paths]
    if not analogy_paths:
        raise ConfigError("no analogy files given or found in the output directory")
    for p in analogy_paths:
        if not Path(p).is_file():
            raise ConfigError(f"analogy file not found: {p}")
    triplets_path = cfg.path("triplets", required=False)
    if triplets_path is not None and not triplets_path.is_file():
        raise ConfigError(f"triplets file not found: {triplets_path}")
    catalog_path = cfg.path("catalog", required=False)

    space = EmbeddingSpace.load(lexicon_path, "query")
    analogies = [an for p in analogy_paths for an in evalkit.load_analogies(p)]
    candidates = None
    if catalog_path is not None and catalog_path.is_file():
        candidates = evalkit.analogy_candidates(load_catalog(catalog_path), analogies)
    report = evalkit.hit_rate(
        space, analogies, [int(k) for k in cfg["cutoffs"]], candidates, bool(cfg["open_vocabulary"])
    )
    if triplets_path is not None:
        triplets = evalkit.load_triplets(triplets_path)
        report.st_accuracy = evalkit.similarity_accuracy(space, triplets)
        report.st_missing = [dataclasses.asdict(t) for t in evalkit.uncovered_triplets(space, triplets)]
    with staged_outputs(cfg.out) as stage:
        evalkit.save_report(report, stage / "eval_report.json", stage / "eval_report.txt", cfg["name"])
    return ["eval_report.json", "eval_report.txt"]


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="training workers; >1 is not deterministic")
    common.add_argument("--catalog")
    common.add_argument("--sessions")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="groundlex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-shop", parents=[common], help="write a seeded synthetic shop")
    sub.add_parser("train-products", parents=[common], help="train product vectors from sessions")
    p = sub.add_parser("embed-queries", parents=[common], help="build the query lexicon")
    p.add_argument("--mode", choices=("real", "synthetic", "merged"), default="merged")
    p.add_argument("--clicks")
    p.add_argument("--words", help="one word per line (synthetic/merged modes)")
    p.add_argument("--product-vectors", dest="product_vectors")
    p.add_argument("--rank", type=int)
    p = sub.add_parser("build-analogies", parents=[common], help="generate taxonomy analogies")
    p.add_argument("--pair", action="append", dest="pairs", metavar="FIELD:FIELD")
    p = sub.add_parser("evaluate", parents=[common], help="score a lexicon on analogies")
    p.add_argument("--lexicon")
    p.add_argument("--analogies", nargs="+")
    p.add_argument("--triplets")
    p.add_argument("--cutoffs", type=int, nargs="+")
    p.add_argument("--open-vocabulary", dest="open_vocabulary", action="store_true", default=None)
    p.add_argument("--name")
    return parser


_NON_CONFIG = {"command", "config", "verbose", "mode", "pairs"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "simulate-shop":
            written = cmd_simulate_shop(cfg)
        elif args.command == "train-products":
            written = cmd_train_products(cfg)
        elif args.command == "embed-queries":
            written = cmd_embed_queries(cfg, args.mode)
        elif args.command == "build-analogies":
            written = cmd_build_analogies(cfg, args.pairs)
        else:
            written = cmd_evaluate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in written:
        print(cfg.out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
