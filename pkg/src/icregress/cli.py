"""Command-line entry point.

Every subcommand takes one JSON config file plus ``--seed``, ``--out`` and
``--resume``. Success exits 0 and prints a short JSON summary on stdout;
failure exits nonzero with ``{"error": ..., "message": ..., "command": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset as ds
from . import harness as hn
from . import incremental as inc
from . import metrics as mt
from . import regressor as reg

EXPERIMENTS = {
    "ablate": ("ablation",),
    "sweep-k": ("k_sweep", "trait_adapt"),
    "personalize": ("personalization",),
    "forgetting": ("forgetting",),
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", "UsageError", message, code=2)


def _fail(command: str, kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}) + "\n")
    sys.exit(code)


def _read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config not found: {path}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"config is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object")
    return cfg


def _out(args, cfg: dict) -> Path:
    out = Path(args.out or cfg.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    hn._atomic_write(path, (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode())


def _data_spec(cfg: dict, key: str = "data") -> dict:
    spec = cfg.get(key)
    if not isinstance(spec, dict) or not ("generate" in spec or "path" in spec):
        raise CliError(f"config needs '{key}' with a 'generate' spec or a 'path'")
    return spec


def _train_config(cfg: dict, seed: int | None) -> reg.TrainConfig:
    d = dict(cfg.get("train", {}))
    if seed is not None:
        d["seed"] = seed
    return reg.TrainConfig(**d)


def _descriptor(cfg: dict) -> reg.ArchitectureDescriptor:
    d = dict(cfg.get("descriptor", {}))
    for k in ("conv_channels", "fc_widths"):
        if k in d:
            d[k] = tuple(d[k])
    return reg.ArchitectureDescriptor(**d)


def _fresh(out: Path, files: list[str], cfg: dict, args) -> bool:
    """True when --resume finds outputs produced by this exact config."""
    meta = out / "meta.json"
    if not args.resume:
        return False
    if not meta.exists():
        raise CliError(f"resume requested but {meta} does not exist")
    stamp = {"config": cfg, "seed": args.seed}
    return json.loads(meta.read_text()).get("stamp") == stamp and all((out / f).exists() for f in files)


def _stamp(out: Path, cfg: dict, args, extra: dict) -> None:
    _write_json(out / "meta.json", {"stamp": {"config": cfg, "seed": args.seed}, **extra})


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args, cfg):
    spec = _data_spec({"data": cfg} if "generate" in cfg else cfg)
    if "generate" not in spec:
        raise CliError("generate needs a 'generate' spec")
    if args.seed is not None:
        spec = {"generate": {**spec["generate"], "seed": args.seed}}
    out = _out(args, cfg)
    if _fresh(out, ["samples.jsonl", "manifest.json"], cfg, args):
        return {"status": "resumed", "out": str(out)}
    g = dict(spec["generate"])
    data = ds.generate_dataset(
        n_participants=g.pop("n_participants", 56),
        n_segments=g.pop("n_segments", ds.SEGMENTS_PER_PARTICIPANT),
        seed=g.pop("seed", 0),
        params=ds.GeneratorParams.from_dict(g.pop("params", {})),
        prefix=g.pop("prefix", "p"),
    )
    if g:
        raise CliError(f"unknown generate keys: {', '.join(sorted(g))}")
    ds.save_dataset(data, out)
    _stamp(out, cfg, args, {})
    return {"status": "ok", "out": str(out), "samples": len(data.samples), "participants": len(data.profiles)}


def cmd_train_base(args, cfg):
    out = _out(args, cfg)
    if _fresh(out, ["base.ckpt", "exemplars.jsonl"], cfg, args):
        return {"status": "resumed", "out": str(out)}
    samples, _ = hn.load_data(_data_spec(cfg))
    x, y = ds.stack_features(samples)
    params, ex = inc.train_base(x, y, cfg.get("K", 0.125), _train_config(cfg, args.seed), _descriptor(cfg),
                                [s.sample_id for s in samples])
    reg.save_params(params, out / "base.ckpt")
    ex.save(out / "exemplars.jsonl")
    _stamp(out, cfg, args, {"base_length": len(y), "exemplars": len(ex)})
    return {"status": "ok", "out": str(out), "base_length": len(y), "exemplars": len(ex)}


def cmd_adapt(args, cfg):
    out = _out(args, cfg)
    if _fresh(out, ["adapted.ckpt"], cfg, args):
        return {"status": "resumed", "out": str(out)}
    if "base" not in cfg:
        raise CliError("adapt needs 'base', the directory written by train-base")
    base_dir = Path(cfg["base"])
    for f in ("base.ckpt", "exemplars.jsonl"):
        if not (base_dir / f).exists():
            raise CliError(f"missing checkpoint {base_dir / f}")
    base = reg.load_params(base_dir / "base.ckpt")
    exemplars = inc.ExemplarSet.load(base_dir / "exemplars.jsonl")
    if cfg.get("K") == 0:
        exemplars = inc.ExemplarSet.empty(base.descriptor.input_channels, base.descriptor.input_timesteps)
    variant = cfg.get("variant", "finetune_from_base")
    if variant not in ("finetune_from_base", "scratch"):
        raise CliError(f"unknown variant {variant!r}")
    samples, _ = hn.load_data(_data_spec(cfg))
    x, y = ds.stack_features(samples)
    bs = int(cfg.get("stream_batch", 64))
    stream = ((x[i : i + bs], y[i : i + bs]) for i in range(0, len(y), bs))
    start = base if variant == "finetune_from_base" else None
    params = inc.adapt(exemplars, stream, start, _train_config(cfg, args.seed), base.descriptor)
    reg.save_params(params, out / "adapted.ckpt")
    _stamp(out, cfg, args, {"exemplars": len(exemplars), "new_samples": len(y)})
    return {"status": "ok", "out": str(out), "exemplars": len(exemplars), "new_samples": len(y)}


def cmd_evaluate(args, cfg):
    out = _out(args, cfg)
    if "checkpoint" not in cfg:
        raise CliError("evaluate needs 'checkpoint'")
    ckpt = Path(cfg["checkpoint"])
    if not ckpt.exists():
        raise CliError(f"missing checkpoint {ckpt}")
    params = reg.load_params(ckpt)
    samples, _ = hn.load_data(_data_spec(cfg))
    result = mt.evaluate(samples, params, cfg.get("modalities"), keep_records=bool(cfg.get("records", False)))
    _write_json(out / "eval.json", result.to_dict())
    if cfg.get("records"):
        result.write_records_csv(out / "records.csv")
    return {"status": "ok", "out": str(out), **result.to_dict()}


def _experiment(command):
    def run(args, cfg):
        cfg = dict(cfg)
        kinds = EXPERIMENTS[command]
        cfg.setdefault("kind", kinds[0])
        if cfg["kind"] not in kinds:
            raise CliError(f"{command} runs kind {' or '.join(kinds)}, config says {cfg['kind']!r}")
        if args.out:
            cfg["out_dir"] = args.out
        if args.seed is not None:
            cfg["seeds"] = [args.seed]
        config = hn.ExperimentConfig.from_dict(cfg)
        log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
        report = hn.execute(config, resume=args.resume, log=log)
        return {"status": "ok", "out": config.out_dir, "cells": len(report.cells), "plot_csvs": report.plot_csvs}

    return run


def cmd_emit_plots(args, cfg):
    if "cells" in cfg:
        report = hn.ExperimentReport.from_dict(cfg)
    elif "report" in cfg:
        path = Path(cfg["report"])
        if not path.exists():
            raise CliError(f"report not found: {path}")
        report = hn.ExperimentReport.load(path)
    else:
        raise CliError("emit-plots needs a report, or a config with 'report'")
    out = _out(args, {"out_dir": report.config.get("out_dir")})
    paths = hn.emit_plotdata(report, out)
    return {"status": "ok", "plot_csvs": [str(p) for p in paths]}


COMMANDS = {
    "generate": cmd_generate,
    "train-base": cmd_train_base,
    "adapt": cmd_adapt,
    "evaluate": cmd_evaluate,
    **{name: _experiment(name) for name in EXPERIMENTS},
    "emit-plots": cmd_emit_plots,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icregress", description="Rehearsal-based incremental regression experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="JSON config file")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--resume", action="store_true", help="reuse outputs and checkpoints from an earlier run")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _read_config(args.config)
        summary = COMMANDS[args.command](args, cfg)
    except (CliError, hn.HarnessError, ds.DatasetError, reg.RegressorError, inc.AdaptationError,
            mt.MetricError, ValueError, TypeError, KeyError, OSError) as e:
        msg = str(e.args[0]) if isinstance(e, KeyError) and e.args else str(e)
        _fail(args.command, type(e).__name__, msg)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
