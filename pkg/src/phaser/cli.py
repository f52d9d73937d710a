"""``phaser`` command line: one subcommand per pipeline stage.

Every subcommand writes its artifact to ``--out`` plus a run manifest
(``<out>.manifest.json``) holding the fully resolved arguments; stdout gets a
single summary line.  Exit codes: 0 success, 1 usage, 2 data error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import KINDS, AugmentSpec, augment, merge
from .autodiff.serialize import load_module, save_module
from .data import LabeledDataset
from .divergence import DivergenceDomainError, Ensemble, GaussianTrack, bound_report, epsilon_bound, expected_disagreement, expected_joint_error, gibbs_risk, write_bound_csv
from .harness.experiments import VARIANTS, ScenarioSplit, discrepancy_test, run_experiment, semantic_preservation_test, shifted_domain_spec
from .harness.io import atomic_write_text, load_dataset, write_tsds
from .harness.synth import SynthSpec, synth_generate
from .harness.train import TrainConfig, evaluate, metrics_csv, predict_logits, train
from .net import PhaserConfig, build_model, spectral_features
from .signal import dump_spectrogram_csv, stft
from .stationarity import dataset_adf_summary

log = logging.getLogger("phaser")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _manifest(args, extra: dict | None = None) -> None:
    doc = {"version": __version__, "subcommand": args.cmd}
    doc["args"] = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("cmd", "func")}
    doc.update(extra or {})
    atomic_write_text(f"{args.out}.manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_manifest(path) -> dict:
    return json.loads(Path(f"{path}.manifest.json").read_text())


def _strip_domains(ds: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(ds.x, ds.labels, ds.num_classes, None, ds.sample_rate_hz, ds.name)


# -- model flags shared by train / discrepancy / semantic / ablate --------


def _add_model_flags(p):
    p.add_argument("--nfft", type=int, default=64)
    p.add_argument("--seg-len", type=int, default=8)
    p.add_argument("--width-mult", type=int, default=1, dest="c")
    p.add_argument("--bands", type=int, default=3, dest="B")


def _add_train_flags(p, epochs=60, batch_size=16, patience=15):
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=batch_size)
    p.add_argument("--patience", type=int, default=patience)


def _model_kw(args) -> dict:
    return {"nfft": args.nfft, "seg_len": args.seg_len, "c": args.c, "B": args.B}


def _train_cfg(args, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, batch_size=args.batch_size, patience=args.patience, seed=seed)


# -- subcommands ----------------------------------------------------------


def cmd_synth(args) -> str:
    if args.preset == "shifted":
        spec = shifted_domain_spec(seed=args.seed, samples_per_class=args.samples_per_class)
    else:
        spec = SynthSpec(
            num_domains=args.domains,
            num_classes=args.classes,
            V=args.variates,
            T=args.length,
            samples_per_class=args.samples_per_class,
            coding=args.coding,
            mu_slope=args.trend,
            sigma_growth=args.sigma_growth,
            seed=args.seed,
        )
    ds = synth_generate(spec)
    write_tsds(args.out, ds)
    _manifest(args, {"synth_spec": json.loads(spec.to_json())})
    return f"synth: wrote {len(ds)} samples ({spec.num_domains} domains, {spec.num_classes} classes) to {args.out}"


def cmd_augment(args) -> str:
    ds = load_dataset(args.data)
    spec = AugmentSpec(args.kind, (args.phi_lo, args.phi_hi), args.window, args.max_shift_frac, args.seed)
    out = augment(ds, spec)
    if args.merge:
        out = merge(ds, out)
    write_tsds(args.out, out)
    _manifest(args)
    return f"augment: {args.kind} wrote {len(out)} samples to {args.out}"


def cmd_stft(args) -> str:
    ds = load_dataset(args.data)
    if not 0 <= args.index < len(ds):
        raise ValueError(f"sample index {args.index} out of range for {len(ds)} samples")
    s = stft(ds.x[args.index].astype(np.float64), args.seg_len, args.nfft)
    dump_spectrogram_csv(s, args.out)
    _manifest(args)
    return f"stft: sample {args.index} -> {s.shape} spectrogram in {args.out}"


def cmd_adf(args) -> str:
    ds = load_dataset(args.data)
    lag = "auto" if args.lag == "auto" else int(args.lag)
    stats = dataset_adf_summary(ds, lag)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variate", "mean_adf"])
    for i, v in enumerate(stats):
        w.writerow([i, repr(float(v))])
    atomic_write_text(args.out, buf.getvalue())
    _manifest(args)
    return "adf: per-variate mean statistic " + " ".join(f"{v:.4f}" for v in stats)


def cmd_train(args) -> str:
    ds = load_dataset(args.data)
    if args.source:
        ds = ds.select_domains(args.source)
    ds = _strip_domains(ds)
    if args.augment == "hilbert":
        ds = merge(ds, augment(ds, AugmentSpec("hilbert_fixed")))
    cfg = PhaserConfig(V=ds.n_variates, num_classes=ds.num_classes, seed=args.seed, encoding=args.encoding, **_model_kw(args))
    model = build_model(cfg)
    if args.no_residual:
        model.zero_residual(freeze=True)
    res = train(model, ds, _train_cfg(args, args.seed))
    save_module(model, args.out)
    _manifest(args, {"model_config": json.loads(cfg.to_json()), "best_epoch": res.best_epoch, "best_val_loss": res.best_val_loss})
    return f"train: best epoch {res.best_epoch}, val loss {res.best_val_loss:.4f}, val acc {res.val_row.accuracy:.4f} -> {args.out}"


def _load_model(path):
    cfg = PhaserConfig(**_read_manifest(path)["model_config"])
    model = build_model(cfg)
    load_module(model, path)
    model.eval()
    return model


def cmd_eval(args) -> str:
    model = _load_model(args.model)
    ds = load_dataset(args.data)
    if args.domains:
        ds = ds.select_domains(args.domains)
    row = evaluate(model, ds, args.split, scenario=args.scenario, seed=model.cfg.seed)
    atomic_write_text(args.out, metrics_csv([row], model.cfg.num_classes))
    _manifest(args)
    return f"eval: {args.split} accuracy {row.accuracy:.4f} on {len(ds)} samples"


def _write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_discrepancy(args) -> str:
    ds = _strip_domains(load_dataset(args.data))
    acc = discrepancy_test(ds, args.seed, train_cfg=_train_cfg(args, args.seed), **_model_kw(args))
    _write_json(args.out, {"accuracy": acc})
    _manifest(args)
    return f"discrepancy: held-out accuracy {acc:.4f}"


def cmd_semantic(args) -> str:
    ds = _strip_domains(load_dataset(args.data))
    a, b = semantic_preservation_test(ds, args.seed, train_cfg=_train_cfg(args, args.seed), **_model_kw(args))
    _write_json(args.out, {"acc_original": a, "acc_augmented": b, "gap": abs(a - b)})
    _manifest(args)
    return f"semantic: acc_S {a:.4f} acc_HT(S) {b:.4f} gap {abs(a - b):.4f}"


def _read_tracks(path) -> list[GaussianTrack]:
    doc = json.loads(Path(path).read_text())
    items = doc["tracks"] if isinstance(doc, dict) else doc
    return [GaussianTrack(t["mu"], t["sigma"]) for t in items]


def cmd_divergence(args) -> str:
    tracks = _read_tracks(args.tracks)
    eps, (i, j, t) = epsilon_bound(tracks, args.q, form=args.form)
    _write_json(args.out, {"epsilon": eps, "argmax": {"i": i, "j": j, "t": t}, "q": args.q, "form": args.form})
    _manifest(args)
    return f"divergence: epsilon {eps:.6g} at pair ({i}, {j}), t={t}"


def cmd_bound(args) -> str:
    tracks = _read_tracks(args.tracks)
    eps, _ = epsilon_bound(tracks, args.q, form=args.form)
    ds = load_dataset(args.data)
    paths = sorted(Path(args.ensemble).glob("*.phsw"))
    if len(paths) < 2:
        raise ValueError(f"{args.ensemble}: need at least 2 *.phsw models")
    models = [_load_model(p) for p in paths]

    def member(m):
        def predict(x):
            mag, pha = spectral_features(x, m.cfg)
            return predict_logits(m, mag, pha).argmax(axis=1)

        return predict

    preds = Ensemble([member(m) for m in models]).predict(ds.x)
    d = expected_disagreement(preds)
    e = expected_joint_error(preds, labels=ds.labels)
    report = bound_report(d, e, eps, args.q, gibbs_risk(preds, labels=ds.labels))
    write_bound_csv(report, args.out)
    _manifest(args, {"members": [str(p) for p in paths]})
    return f"bound: rhs {report.rhs:.4f} vs risk {report.empirical_risk:.4f} holds={report.holds}"


def _ablate_job(job):
    ds, split, variant, cfg, seed, kw = job
    return run_experiment(ds, split, variant, cfg, seeds=(seed,), **kw)


def cmd_ablate(args) -> str:
    ds = load_dataset(args.data)
    if ds.domains is None:
        raise ValueError("ablate needs a dataset with domain ids")
    ids = sorted(set(ds.domains.tolist()) - {-1})
    target = args.target or [ids[-1]]
    source = args.source or [d for d in ids if d not in target]
    split = ScenarioSplit(tuple(source), tuple(target), scenario=args.scenario)
    split.check(ds)
    bad = [v for v in args.variants if v not in VARIANTS]
    if bad:
        raise UsageError(f"unknown variants {bad}; expected a subset of {VARIANTS}")
    kw = _model_kw(args)
    jobs = [(ds, split, v, _train_cfg(args, s), s, kw) for v in args.variants for s in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ablate_job, jobs))
    else:
        results = [_ablate_job(j) for j in jobs]
    rows = []
    for (_, _, v, _, _, _), res in zip(jobs, results):
        for r in res:
            r.scenario = f"{args.scenario}:{v}"
            rows.append(r)
    atomic_write_text(args.out, metrics_csv(rows, ds.num_classes))
    _manifest(args, {"source_domains": list(split.source_domains), "target_domains": list(split.target_domains)})
    means = {v: np.mean([r.accuracy for r in rows if r.split == "target" and r.scenario.endswith(f":{v}")]) for v in args.variants}
    return "ablate: mean target accuracy " + " ".join(f"{v}={m:.4f}" for v, m in means.items())


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phaser", description="Phase-augmented time-series domain generalization toolkit.")
    p.add_argument("--version", action="version", version=f"phaser {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic multi-domain dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--preset", choices=["none", "shifted"], default="none", help="'shifted' is the ablation benchmark")
    s.add_argument("--domains", type=int, default=4)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--variates", type=int, default=3)
    s.add_argument("--length", type=int, default=128)
    s.add_argument("--samples-per-class", type=int, default=20)
    s.add_argument("--coding", choices=["frequency", "phase"], default="frequency")
    s.add_argument("--trend", type=float, default=0.0, help="mean slope per unit length")
    s.add_argument("--sigma-growth", type=float, default=0.0, help="relative noise-std growth over the length")
    s.add_argument("--seed", type=int, default=2711)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("augment", help="augment a dataset")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--kind", choices=KINDS, default="hilbert_fixed")
    s.add_argument("--phi-lo", type=float, default=-np.pi / 2)
    s.add_argument("--phi-hi", type=float, default=np.pi / 2)
    s.add_argument("--window", type=int, default=None)
    s.add_argument("--max-shift-frac", type=float, default=0.2)
    s.add_argument("--merge", action="store_true", help="write original + augmented")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("stft", help="dump one sample's spectrogram as CSV")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--seg-len", type=int, default=4)
    s.add_argument("--nfft", type=int, default=1024)
    s.set_defaults(func=cmd_stft)

    s = sub.add_parser("adf", help="per-variate mean ADF statistic")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--lag", default="auto", help="'auto' or a fixed lag order")
    s.set_defaults(func=cmd_adf)

    s = sub.add_parser("train", help="train a PhASER model")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="PHSW weights file")
    s.add_argument("--source", type=_int_list, default=None, help="train only on these domain ids")
    s.add_argument("--augment", choices=["none", "hilbert"], default="hilbert")
    s.add_argument("--encoding", choices=["separate", "mag_only", "concat"], default="separate")
    s.add_argument("--no-residual", action="store_true")
    s.add_argument("--seed", type=int, default=2711)
    _add_model_flags(s)
    _add_train_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a trained model")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--domains", type=_int_list, default=None)
    s.add_argument("--split", default="target")
    s.add_argument("--scenario", type=int, default=0)
    s.set_defaults(func=cmd_eval)

    for name, fn, helptext in (
        ("discrepancy", cmd_discrepancy, "S vs HT(S) discriminability"),
        ("semantic", cmd_semantic, "accuracy on held-out S vs HT(S)"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--data", type=Path, required=True)
        s.add_argument("--out", type=Path, required=True)
        s.add_argument("--seed", type=int, default=2711)
        _add_model_flags(s)
        if name == "discrepancy":
            _add_train_flags(s, epochs=30)
        else:
            _add_train_flags(s, epochs=80, batch_size=8, patience=20)
        s.set_defaults(func=fn)

    s = sub.add_parser("divergence", help="maximal pairwise beta divergence of Gaussian tracks")
    s.add_argument("--tracks", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--form", choices=["paper", "standard"], default="standard")
    s.set_defaults(func=cmd_divergence)

    s = sub.add_parser("bound", help="unseen-domain risk bound for a model ensemble")
    s.add_argument("--tracks", type=Path, required=True)
    s.add_argument("--ensemble", type=Path, required=True, help="directory of *.phsw models")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--form", choices=["paper", "standard"], default="standard")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("ablate", help="variant x seed ablation on held-out domains")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--scenario", type=int, default=1)
    s.add_argument("--source", type=_int_list, default=None)
    s.add_argument("--target", type=_int_list, default=None, help="default: highest domain id")
    s.add_argument("--variants", type=_str_list, default=["full", "no_aug", "no_residual"])
    s.add_argument("--seeds", type=_int_list, default=[2711, 2712, 2713])
    s.add_argument("--jobs", type=int, default=1)
    _add_model_flags(s)
    _add_train_flags(s)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    log.info("resolved config: %s", {k: str(v) for k, v in vars(args).items() if k != "func"})
    try:
        summary = args.func(args)
    except UsageError as exc:
        print(f"phaser {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, DivergenceDomainError) as exc:
        print(f"phaser {args.cmd}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"phaser {args.cmd}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
