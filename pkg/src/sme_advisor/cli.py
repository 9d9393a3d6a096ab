"""Command-line pipeline: gen-data, train, evaluate, cross-validate, predict, report.

Settings come from an optional JSON config file with flat keys, then from
command-line flags. The seed falls back to the ``SME_ORACLE_SEED``
environment variable and then to 0. Exit status is 2 for argument or
config errors and 1 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import advice, evaluation, pipeline
from .dataset import SyntheticConfig, generate_synthetic, load_csv, save_csv
from .numerics import ContractError

log = logging.getLogger("sme_advisor")

SEED_ENV = "SME_ORACLE_SEED"


class ConfigError(ValueError):
    """Bad configuration key or value; reported with exit status 2."""


class StepError(RuntimeError):
    """A pipeline step failed; reported with exit status 1."""


@dataclass(frozen=True)
class RunConfig(pipeline.Hyperparams):
    seed: int = 0
    m: int = 200
    d_bank: int = 6
    d_external: int = 6
    latent_dim: int = 3
    noise_stddev: float = 0.2
    planted_features: list[int] | None = None
    k: int = 5
    tasks: list[str] | None = None
    models: list[str] = field(default_factory=lambda: ["rf", "svm", "ann", "mtl"])
    model: str = "mtl"
    top_k: int | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.k < 2:
            raise ContractError("k must be at least 2")
        for kind in [*self.models, self.model]:
            if kind not in pipeline.KINDS:
                raise ContractError(f"unknown model kind {kind!r}")
        if self.top_k is not None and self.top_k < 1:
            raise ContractError("top_k must be at least 1")
        if self.tasks is not None:
            pipeline.task_list(self.tasks, True)

    def hyper(self) -> pipeline.Hyperparams:
        return pipeline.Hyperparams(**{k: getattr(self, k) for k in pipeline.Hyperparams.keys()})

    def synthetic(self) -> SyntheticConfig:
        planted = None if self.planted_features is None else tuple(self.planted_features)
        return SyntheticConfig(self.m, self.d_bank, self.d_external, self.latent_dim, self.noise_stddev,
                               self.seed, planted)

    def to_json(self) -> dict:
        return asdict(self)


_OPTIONAL = {"planted_features", "tasks", "top_k"}


def _check_type(key: str, value, default):
    """Coerce a config value to the type of the field default, or fail naming the key."""
    if value is None and key in _OPTIONAL:
        return None
    if key in ("planted_features", "tasks", "models"):
        item = int if key == "planted_features" else str
        if isinstance(value, str) and item is str:
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, list) or not all(isinstance(v, item) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"config key {key!r} must be a list of {item.__name__}")
        return list(value)
    kind = type(default) if default is not None else int
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, got {value!r}")
    return value


def build_config(raw: dict, base: RunConfig | None = None) -> RunConfig:
    """Merge flat ``raw`` settings over ``base`` (or the defaults) and validate."""
    base = base or RunConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(RunConfig)}
    clean = {}
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        reference = RunConfig.__dataclass_fields__[key].default
        if key == "models":
            reference = []
        clean[key] = _check_type(key, value, reference if reference is not None else defaults[key])
    try:
        return replace(base, **clean)
    except (ContractError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> RunConfig:
    """Read a JSON config file; absent keys take their documented defaults."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return build_config(raw, _env_base())


def _env_base() -> RunConfig:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return RunConfig()
    try:
        return RunConfig(seed=int(env))
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


# -- argument grammar ---------------------------------------------------------

def _parse_set(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sme-advisor", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flat settings")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--seed", type=int)
        p.add_argument("--set", dest="overrides", action="append", type=_parse_set, default=[],
                       metavar="KEY=VALUE", help="override any config key (JSON value)")
        if data:
            p.add_argument("--data", required=True, help="dataset CSV")
        p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    common(p, data=False)
    p.add_argument("--m", type=int)
    p.add_argument("--planted-features", type=lambda s: [int(v) for v in s.split(",")])

    p = sub.add_parser("train", help="train one model and save it as JSON")
    common(p)
    p.add_argument("--model", choices=pipeline.KINDS)
    p.add_argument("--tasks", type=lambda s: s.split(","))
    p.add_argument("--epochs", type=int)

    for name, help_ in (("evaluate", "k-fold RMSE comparison table"), ("cross-validate", "per-fold metrics as JSON")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--models", type=lambda s: s.split(","))
        p.add_argument("--tasks", type=lambda s: s.split(","))
        p.add_argument("--k", type=int)
        p.add_argument("--epochs", type=int)
        if name == "evaluate":
            p.add_argument("--json", help="also write the JSON report here (default: OUT.json)")

    p = sub.add_parser("predict", help="per-task predictions for the rows of a CSV")
    common(p)
    p.add_argument("--model-file", required=True)

    p = sub.add_parser("report", help="ranked statement of advice for candidate sites")
    common(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--top-k", type=int)
    p.add_argument("--generated-at", help="fixed timestamp for the report")
    return parser


_FLAG_KEYS = ("seed", "m", "planted_features", "model", "tasks", "epochs", "models", "k", "top_k")


def effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else _env_base()
    raw = {key: getattr(args, key) for key in _FLAG_KEYS if getattr(args, key, None) is not None}
    raw.update(dict(args.overrides))
    return build_config(raw, cfg)


# -- commands -----------------------------------------------------------------

def _step(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, StepError):
        raise
    except Exception as exc:
        raise StepError(f"{name}: {exc}") from exc


def _write(path, text: str) -> None:
    _step("write output", Path(path).write_text, text, encoding="utf-8")
    log.info("wrote %s", path)


def _provenance(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "seed": cfg.seed, "config": cfg.to_json()}


def cmd_gen_data(args, cfg: RunConfig) -> None:
    data = _step("dataset.generate_synthetic", generate_synthetic, cfg.synthetic())
    _step("dataset.save_csv", save_csv, data, args.out)
    _write(f"{args.out}.meta.json", pipeline.dumps(_provenance(cfg, "gen-data")))
    log.info("generated %d instances with %d features", data.m, data.d)


def _load(path, require_labels=True):
    return _step("dataset.load_csv", load_csv, path, None, require_labels)


def cmd_train(args, cfg: RunConfig) -> None:
    data = _load(args.data)
    model = _step("pipeline.fit_model", pipeline.fit_model, cfg.model, data, cfg.hyper(), cfg.seed,
                  cfg.tasks, cfg.to_json())
    _write(args.out, pipeline.dumps(model.to_document()))


def _cross_validate(data, cfg: RunConfig) -> dict[str, evaluation.CvResult]:
    results = {}
    for kind in cfg.models:
        log.info("cross-validating %s (k=%d)", kind, cfg.k)
        results[kind] = _step(f"evaluation.cross_validate[{kind}]", evaluation.cross_validate,
                              pipeline.trainer(kind, cfg.hyper(), cfg.tasks), data, cfg.k, cfg.seed)
    return results


def _classification(cv: evaluation.CvResult) -> dict:
    """Per-task mean class accuracy and summed survival confusion counts."""
    out = {}
    for key, value in cv.mean.items():
        if key.startswith("class_accuracy_"):
            out[key[len("class_accuracy_"):]] = {"accuracy": value}
    cms = [f.confusion for f in cv.folds if f.confusion is not None]
    if cms:
        cm = evaluation.ConfusionMatrix(*(sum(getattr(c, n) for c in cms) for n in ("tp", "fp", "tn", "fn")))
        out["survival"] = {
            "positive_class": cm.positive_class_meaning,
            "confusion": cm.to_json(),
            "accuracy": evaluation.metric_or_none(evaluation.accuracy, cm),
            "paper_specificity": evaluation.metric_or_none(evaluation.paper_specificity, cm),
            "standard_specificity": evaluation.metric_or_none(evaluation.standard_specificity, cm),
        }
    return out


def _report_doc(cfg: RunConfig, results: dict[str, evaluation.CvResult], command: str) -> dict:
    grid = {m: {k[len("rmse_"):]: v for k, v in r.mean.items() if k.startswith("rmse_")} for m, r in results.items()}
    return evaluation.comparison_document(
        grid,
        classification={m: _classification(r) for m, r in results.items()},
        cv={m: r.to_json() for m, r in results.items()},
        **_provenance(cfg, command),
    )


def cmd_evaluate(args, cfg: RunConfig) -> None:
    data = _load(args.data)
    results = _cross_validate(data, cfg)
    doc = _report_doc(cfg, results, "evaluate")
    grid = {m: row for m, row in doc["rmse"].items() if row}
    table = _step("evaluation.emit_comparison_table", evaluation.emit_comparison_table, grid)
    _write(args.out, table)
    _write(args.json or f"{args.out}.json", pipeline.dumps(doc))
    sys.stderr.write(table)


def cmd_cross_validate(args, cfg: RunConfig) -> None:
    data = _load(args.data)
    _write(args.out, pipeline.dumps(_report_doc(cfg, _cross_validate(data, cfg), "cross-validate")))


def _load_model(path):
    return _step("pipeline.load_model", pipeline.load_model, path)


def cmd_predict(args, cfg: RunConfig) -> None:
    model = _load_model(args.model_file)
    data = _load(args.data, require_labels=False)
    _step("pipeline.check_schema", model.check_schema, data)
    pred = _step("pipeline.predict", model.predict, data.X)
    rows = []
    for i, ident in enumerate(data.ids):
        row = {"site_id": ident}
        if pred.survival_prob is not None:
            row["survival_probability"] = float(pred.survival_prob[i])
        for task, values in pred.values.items():
            row[task] = float(values[i])
            row[f"{task}_class"] = "LMH"[int(pred.classes[task][i])]
        rows.append(row)
    doc = {"model_id": advice.model_id(model), "kind": model.kind, "schema_hash": model.schema_hash,
           **_provenance(cfg, "predict"), "predictions": rows}
    _write(args.out, pipeline.dumps(doc))


def cmd_report(args, cfg: RunConfig) -> None:
    model = _load_model(args.model_file)
    data = _load(args.data, require_labels=False)
    doc = _step("advice.advise", advice.advise, model, data, cfg.top_k, args.generated_at,
                {"seed": cfg.seed, "config": cfg.to_json(), "model_kind": model.kind})
    _write(args.out, pipeline.dumps(doc))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "cross-validate": cmd_cross_validate,
    "predict": cmd_predict,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = effective_config(args)
    except ConfigError as exc:
        sys.stderr.write(f"sme-advisor: config error: {exc}\n")
        return 2
    try:
        COMMANDS[args.command](args, cfg)
    except StepError as exc:
        sys.stderr.write(f"sme-advisor {args.command}: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
