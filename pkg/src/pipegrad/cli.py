"""Command-line entry point: ``pipegrad fit|translate|finetune|eval|compare``.

All settings live in one JSON config; ``--set a.b=value`` overrides a dotted
key (values are parsed as JSON, falling back to a plain string).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import pipeline_ir as ir
from .data import DataError, SplitSpec, load_csv, load_schema, split
from .eval.fidelity import fidelity_check
from .eval.metrics import auc, logloss
from .eval.params import count_parameters
from .netrt.graph import NET_VERSION, CheckpointError, NeuralGraph
from .netrt.train import DivergenceError, TrainConfig, finetune, write_history
from .scenarios import SCENARIOS, PipelineConfig, fit_pipeline
from .synthetic import make_fixture
from .trainers.encoders import fit_onehot
from .trainers.mlp import mlp_param_count, size_hidden, train_mlp_baseline
from .translator import TranslationConfig, TranslationError, translate_pipeline

log = logging.getLogger("pipegrad")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_FIDELITY = 0, 2, 3, 4

DEFAULTS = {
    "scenario": "s1_onehot",
    "data": {"split": {"train": 0.6, "valid": 0.2, "test": 0.2, "seed": 0}, "label_column": "label"},
    "pipeline": {},
    "translation": {},
    "train": {},
    "fidelity_rows": 10000,
    "eval": {"artifact": "pipeline.json", "dataset": "test"},
}


class ConfigError(ValueError):
    pass


class FidelityFailure(RuntimeError):
    pass


# -- config handling ----------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part!r} is not a section")
    node[parts[-1]] = value


def load_config(path, overrides=()) -> dict:
    cfg = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, cfg)
    for o in overrides:
        apply_override(cfg, o)
    return cfg


def _section(cfg: dict, name: str, cls):
    raw = cfg.get(name) or {}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None


def _path(cfg: dict, out: Path, key: str, default: str) -> Path:
    p = Path(cfg.get(key) or default)
    return p if p.is_absolute() or p.exists() else out / p


def load_data(cfg: dict):
    """Return (train, valid, test) per the config's data section."""
    data = cfg.get("data") or {}
    if "synthetic" in data:
        syn = data["synthetic"] or {}
        ds = make_fixture(int(syn.get("rows", 5000)), int(syn.get("seed", 0)))
    else:
        if "train" not in data:
            raise ConfigError("data.train is required (or data.synthetic for the bundled fixture)")
        if "schema" not in data:
            raise ConfigError("data.schema is required when loading CSV files")
        for key in ("train", "valid", "test", "schema"):
            if key in data and not Path(data[key]).exists():
                raise ConfigError(f"data.{key}: file not found: {data[key]}")
        schema = load_schema(data["schema"])
        label = data.get("label_column", "label")
        ds = load_csv(data["train"], schema, label)
        if "valid" in data and "test" in data:
            return ds, load_csv(data["valid"], schema, label), load_csv(data["test"], schema, label)
    sp = data.get("split") or {}
    try:
        spec = SplitSpec(sp.get("train", 0.6), sp.get("valid", 0.2), sp.get("test", 0.2), sp.get("seed", 0))
    except DataError as e:
        raise ConfigError(f"data.split: {e}") from None
    return split(ds, spec)


def _scenario(cfg: dict) -> str:
    sc = cfg.get("scenario")
    if sc not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}, got {sc!r}")
    return sc


def _probabilities(scores, already_prob: bool):
    return np.asarray(scores) if already_prob else expit(scores)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -----------------------------------------------------------------

def cmd_fit(cfg: dict, out: Path) -> int:
    scenario = _scenario(cfg)
    if scenario == "custom":
        raise ConfigError("scenario 'custom' is not fitted; point pipeline_path at an existing pipeline file")
    pcfg = _section(cfg, "pipeline", PipelineConfig)
    train, valid, test = load_data(cfg)
    try:
        graph = fit_pipeline(scenario, train, pcfg)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ir.save_pipeline(graph, out / "pipeline.json")
    metrics = {}
    for name, ds in (("train", train), ("valid", valid), ("test", test)):
        metrics[f"{name}_auc"] = auc(ir.pipeline_predict_batch(graph, ds), ds.labels)
    _write_json(out / "fit_metrics.json", metrics)
    print(f"pipeline {scenario}: nodes {', '.join(graph.order)}")
    print("classical AUC train {train_auc:.5f} valid {valid_auc:.5f} test {test_auc:.5f}".format(**metrics))
    return EXIT_OK


def _translate(graph, tcfg: TranslationConfig, check_rows):
    """Translate, and check hard-mode fidelity of the warm network."""
    try:
        warm = translate_pipeline(graph, _warm(tcfg))
        net = warm if tcfg.start == "warm" else translate_pipeline(graph, tcfg)
    except TranslationError as e:
        raise ConfigError(f"translation: {e}") from None
    return net, fidelity_check(graph, warm, check_rows)


def _warm(tcfg: TranslationConfig) -> TranslationConfig:
    return TranslationConfig(**{**asdict(tcfg), "start": "warm"})


def cmd_translate(cfg: dict, out: Path) -> int:
    tcfg = _section(cfg, "translation", TranslationConfig)
    path = _path(cfg, out, "pipeline_path", "pipeline.json")
    if not path.exists():
        raise ConfigError(f"pipeline_path: file not found: {path}")
    try:
        graph = ir.load_pipeline(path)
    except (ir.PipelineError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"pipeline file {path}: {e}") from None
    test = load_data(cfg)[2]
    rows = test.subset(np.arange(min(test.rows, int(cfg.get("fidelity_rows", 10000)))))
    net, report = _translate(graph, tcfg, rows)
    net.save(out / "net.json")
    _write_json(out / "fidelity.json", report.to_dict())
    _write_json(out / "params.json", count_parameters(net).to_dict())
    pc = count_parameters(net)
    print(f"translated at {tcfg.level} ({tcfg.start} start): {pc.total_trainable} trainable of {pc.total_all}")
    print(f"fidelity: {report.hard_mismatches} hard mismatches over {report.rows_checked} rows, "
          f"max soft deviation {report.max_soft_abs_deviation:.3g}")
    if report.hard_mismatches:
        raise FidelityFailure(f"{report.hard_mismatches} rows disagree with the pipeline in hard mode")
    return EXIT_OK


def cmd_finetune(cfg: dict, out: Path) -> int:
    tr_cfg = _section(cfg, "train", TrainConfig)
    path = _path(cfg, out, "checkpoint", "net.json")
    net = _load_net(path)
    train, valid, test = load_data(cfg)
    tuned, history = finetune(net, train, valid, tr_cfg)
    tuned.save(out / "net_tuned.json")
    write_history(history, out / "history.csv")
    before = {n: auc(net.predict(d), d.labels) for n, d in (("valid", valid), ("test", test))}
    after = {n: auc(tuned.predict(d), d.labels) for n, d in (("valid", valid), ("test", test))}
    _write_json(out / "finetune_metrics.json", {"before": before, "after": after})
    for n in ("valid", "test"):
        print(f"{n} AUC {after[n]:.5f} (delta {after[n] - before[n]:+.5f} vs frozen)")
    return EXIT_OK


def _load_net(path: Path) -> NeuralGraph:
    if not path.exists():
        raise ConfigError(f"checkpoint: file not found: {path}")
    try:
        return NeuralGraph.load(path)
    except (CheckpointError, json.JSONDecodeError) as e:
        raise ConfigError(f"checkpoint {path}: {e}") from None


def cmd_eval(cfg: dict, out: Path) -> int:
    ev = cfg.get("eval") or {}
    path = _path(ev, out, "artifact", "pipeline.json")
    which = ev.get("dataset", "test")
    parts = dict(zip(("train", "valid", "test"), load_data(cfg)))
    if which not in parts:
        raise ConfigError(f"eval.dataset must be train, valid or test, got {which!r}")
    ds = parts[which]
    if not path.exists():
        raise ConfigError(f"eval.artifact: file not found: {path}")
    try:
        version = json.loads(path.read_text(encoding="utf-8")).get("version")
    except json.JSONDecodeError as e:
        raise ConfigError(f"eval.artifact {path}: {e}") from None
    if version == NET_VERSION:
        net = _load_net(path)
        scores, is_prob, kind = net.predict(ds), net.output_sigmoid, "network (eval mode)"
    else:
        graph = ir.load_pipeline(path)
        scores = ir.pipeline_predict_batch(graph, ds)
        is_prob, kind = graph.node(graph.sink).kind == ir.SIGMOID, "pipeline (hard)"
    try:
        result = {"auc": auc(scores, ds.labels), "logloss": logloss(_probabilities(scores, is_prob), ds.labels)}
    except ValueError as e:
        raise ConfigError(f"eval on {which}: {e}") from None
    _write_json(out / "eval.json", {**result, "artifact": path.name, "dataset": which})
    print(f"{kind} {path.name} on {which}: AUC {result['auc']:.5f} logloss {result['logloss']:.5f}")
    return EXIT_OK


def _input_width(ds) -> int:
    return len(ds.numeric_columns) + sum(fit_onehot(ds.column(c)).cardinality for c in ds.categorical_columns)


def cmd_compare(cfg: dict, out: Path) -> int:
    scenario = _scenario(cfg)
    pcfg = _section(cfg, "pipeline", PipelineConfig)
    tcfg = _section(cfg, "translation", TranslationConfig)
    tr_cfg = _section(cfg, "train", TrainConfig)
    mlp_dropout = float((cfg.get("mlp") or {}).get("dropout", 0.1))
    train, valid, test = load_data(cfg)
    if scenario == "custom":
        graph = ir.load_pipeline(_path(cfg, out, "pipeline_path", "pipeline.json"))
    else:
        try:
            graph = fit_pipeline(scenario, train, pcfg)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def row(model, init, cold_seed, params, score_fn):
        return {"model": model, "init": init, "cold_seed": cold_seed, "trainable_params": params,
                "valid_auc": auc(score_fn(valid), valid.labels), "test_auc": auc(score_fn(test), test.labels)}

    rows = [row("classical pipeline", "greedy", "", 0, lambda d: ir.pipeline_predict_batch(graph, d))]
    warm = translate_pipeline(graph, _warm(tcfg))
    target = count_parameters(warm).total_trainable
    for start in ("warm", "cold"):
        net = translate_pipeline(graph, TranslationConfig(**{**asdict(tcfg), "start": start}))
        tuned, _ = finetune(net, train, valid, tr_cfg)
        rows.append(row(f"translated {tcfg.level}", start, tcfg.cold_seed if start == "cold" else "",
                        target, tuned.predict))
    d = _input_width(train)
    h = size_hidden(d, target)
    mlp, _ = train_mlp_baseline(train, (h, h), mlp_dropout, tr_cfg, seed=tr_cfg.seed, valid=valid)
    rows.append(row(f"MLP {h}x{h}", "random", "", mlp_param_count(d, h, h), mlp.predict))

    cols = list(rows[0])
    with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, cols)
        w.writeheader()
        w.writerows(rows)
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        cells = [f"{v:.5f}" if isinstance(v, float) else str(v) for v in r.values()]
        lines.append("| " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    (out / "compare.md").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "translate": cmd_translate, "finetune": cmd_finetune,
            "eval": cmd_eval, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pipegrad", description="Translate trained ML pipelines into neural networks.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key using dotted paths (repeatable)")
    ap.add_argument("--out", default=None, help="output directory (default: config 'out' or ./pipegrad-out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        out = Path(args.out or cfg.get("out") or "pipegrad-out")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except FidelityFailure as e:
        print(f"error: fidelity check failed: {e}", file=sys.stderr)
        return EXIT_FIDELITY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
