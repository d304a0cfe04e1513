"""Command-line front end: generate -> features -> eval -> report.

Exit codes: 0 success, 1 runtime error, 2 usage error.  All randomness
flows from the master seed given to ``gen``; evaluation itself is
deterministic, so identical dataset + config produce byte-identical
outputs.  ``EARID_THREADS`` caps the evaluation worker pool.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluate, metrics, protocol
from .errors import EaridError
from .features import FEATURE_SETS, N_FEATURES
from .features import welch_series
from .signal import DEFAULT_TRIM_SECONDS, preprocess

_EVAL_DEFAULTS = {
    "setups": "r,b",
    "seg_lens": "10,20,30,60,90",
    "classifiers": "cos,lda,svm",
    "features": "psd+ar",
    "include_sn": "true",
    "seed": "0",
}
CELLS_FILE = "eval_cells.csv"


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--subjects", type=_positive_int, default=15, help="client subjects")
    gen.add_argument("--imposters", type=_positive_int, default=5)
    gen.add_argument("--days", type=_positive_int, default=2)
    gen.add_argument("--trials", type=_positive_int, default=3)
    gen.add_argument("--duration", type=_positive_float, default=190.0)
    gen.add_argument("--fs", type=_positive_float, default=250.0)
    gen.add_argument("--drift-peak-hz", type=float, default=0.3)
    gen.add_argument("--drift-gain-low", type=float, default=0.8)
    gen.add_argument("--drift-gain-high", type=float, default=1.25)
    gen.add_argument("--artifact-rate", type=float, default=0.03)

    feats = sub.add_parser("features", help="export per-segment feature matrices")
    feats.add_argument("--data", required=True)
    feats.add_argument("--out", required=True)
    feats.add_argument("--seg-len", default="60", help="comma list of segment lengths [s]")

    ev = sub.add_parser("eval", help="run verification and identification")
    ev.add_argument("--config", help="key = value configuration file")
    ev.add_argument("--data")
    ev.add_argument("--out")
    ev.add_argument("--setup", help="comma list from {r, b}")
    ev.add_argument("--seg-len", help="comma list of segment lengths [s]")
    ev.add_argument("--classifier", help="comma list from {cos, lda, svm}")
    ev.add_argument("--features", help="comma list from {psd, ar, psd+ar}")
    ev.add_argument("--include-sn", dest="include_sn", action="store_true", default=None)
    ev.add_argument("--no-include-sn", dest="include_sn", action="store_false")
    ev.add_argument("--seed", type=int, help="recorded in the config echo")
    ev.add_argument("--threads", type=_positive_int)
    ev.add_argument("--audit-plans", action="store_true")
    ev.add_argument(
        "--reject-distance",
        type=float,
        help="open-set option: cosine queries farther than this are rejected as imposters",
    )

    rep = sub.add_parser("report", help="summarise eval outputs and emit plot data")
    rep.add_argument("--eval-dir", required=True)
    rep.add_argument("--data", required=True, help="dataset directory (for PSD plot data)")
    rep.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------- gen


def _dataset_checksum(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.iterdir()):
        if path.suffix in (".f32le", ".csv"):
            digest.update(path.name.encode())
            digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()


def _cmd_gen(args) -> int:
    config = ds.GeneratorConfig(
        n_clients=args.subjects,
        n_imposters=args.imposters,
        days=args.days,
        trials=args.trials,
        duration_s=args.duration,
        fs=args.fs,
        drift_peak_hz=args.drift_peak_hz,
        drift_gain_low=args.drift_gain_low,
        drift_gain_high=args.drift_gain_high,
        artifact_rate=args.artifact_rate,
    )
    manifest = ds.generate_dataset(args.out, seed=args.seed, config=config)
    print(f"dataset {manifest.root}")
    print(f"subjects {len(manifest.clients)} clients + {len(manifest.imposters)} imposters")
    print(f"recordings {len(manifest.entries)}")
    print(f"samples-per-channel {config.n_samples}")
    print(f"checksum {_dataset_checksum(manifest.root)}")
    return 0


# ---------------------------------------------------------------- features


def _write_feature_csv(path: Path, store, manifest) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["subject", "day", "trial", "segment"] + [f"f{i}" for i in range(1, N_FEATURES + 1)]
        )
        for entry in manifest.entries:
            fm = store[entry.key]
            for key, row in zip(fm.rows, fm.values):
                writer.writerow(
                    [key.subject, key.day, key.trial, key.segment]
                    + [repr(float(v)) for v in row]
                )


def _cmd_features(args) -> int:
    manifest = ds.load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seg_lens = [float(tok) for tok in str(args.seg_len).split(",") if tok]
    conditioned = evaluate.condition_recordings(manifest)
    for l_seg in seg_lens:
        store = evaluate.extract_features(conditioned, l_seg)
        name = f"features_{l_seg:g}s.csv"
        _write_feature_csv(out / name, store, manifest)
        print(f"wrote {out / name}")
    return 0


# ---------------------------------------------------------------- eval


@dataclass
class EvalSettings:
    data: str
    out: str
    setups: list[str]
    seg_lens: list[float]
    classifiers: list[str]
    features: list[str]
    include_sn: bool
    seed: int
    threads: int | None
    audit_plans: bool
    reject_distance: float | None


def _parse_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve_eval_settings(args, parser) -> EvalSettings:
    merged = dict(_EVAL_DEFAULTS)
    if args.config:
        merged.update(_parse_config_file(args.config))
    overrides = {
        "data": args.data,
        "out": args.out,
        "setups": args.setup,
        "seg_lens": args.seg_len,
        "classifiers": args.classifier,
        "features": args.features,
        "include_sn": args.include_sn,
        "seed": args.seed,
        "threads": args.threads,
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value

    def tokens(key):
        raw = merged.get(key, "")
        items = [t.strip() for t in str(raw).split(",") if t.strip()]
        if not items:
            parser.error(f"empty selection for {key}")
        return items

    if "data" not in merged or "out" not in merged:
        parser.error("eval needs --data and --out (flags or config file)")
    setups = [t.upper() for t in tokens("setups")]
    if any(s not in ("R", "B") for s in setups):
        parser.error(f"setups must be from {{r, b}}, got {merged['setups']}")
    classifiers = tokens("classifiers")
    if any(c not in evaluate.CLASSIFIERS for c in classifiers):
        parser.error(f"classifiers must be from {evaluate.CLASSIFIERS}")
    features = tokens("features")
    if any(f not in FEATURE_SETS for f in features):
        parser.error(f"features must be from {sorted(FEATURE_SETS)}")
    try:
        seg_lens = [float(t) for t in tokens("seg_lens")]
    except ValueError:
        parser.error(f"bad segment lengths: {merged['seg_lens']}")
    include_sn = merged.get("include_sn")
    if isinstance(include_sn, str):
        if include_sn.lower() not in ("true", "false", "1", "0", "yes", "no"):
            parser.error(f"include_sn must be boolean, got {include_sn!r}")
        include_sn = include_sn.lower() in ("true", "1", "yes")
    threads = merged.get("threads")
    return EvalSettings(
        data=str(merged["data"]),
        out=str(merged["out"]),
        setups=setups,
        seg_lens=seg_lens,
        classifiers=classifiers,
        features=features,
        include_sn=bool(include_sn),
        seed=int(merged.get("seed", 0)),
        threads=int(threads) if threads is not None else None,
        audit_plans=bool(args.audit_plans),
        reject_distance=args.reject_distance,
    )


def _pct(value: Fraction, places: int = 4) -> str:
    return f"{float(value) * 100:.{places}f}"


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_verification_cell(cell_dir: Path, result) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for key, predictions in result.runs.items():
        for p in predictions:
            rows.append(
                [key.client, key.day, key.trial, p.cohort, p.subject, p.day, p.trial,
                 p.segment, p.truth, p.predicted]
            )
    _write_rows(
        cell_dir / "predictions.csv",
        ["client", "day", "trial", "cohort", "subject", "row_day", "row_trial",
         "segment", "truth", "predicted"],
        rows,
    )
    count_rows, metric_rows = [], []
    for name in sorted(result.slices):
        c = result.slices[name]
        count_rows.append([name, c.tp, c.fn, c.fp, c.tn])
        correct = c.tp + c.tn
        share = _pct(Fraction(correct, c.total)) if c.total else ""
        try:
            m = metrics.verification_metrics(c)
            rates = [_pct(m.far), _pct(m.frr), _pct(m.hter), _pct(m.ac), _pct(m.tpr)]
        except EaridError:
            rates = ["", "", "", "", ""]
        metric_rows.append([name, c.tp, c.fn, c.fp, c.tn, *rates, correct, c.total, share])
    _write_rows(cell_dir / "counts.csv", ["slice", "tp", "fn", "fp", "tn"], count_rows)
    _write_rows(
        cell_dir / "metrics.csv",
        ["slice", "tp", "fn", "fp", "tn", "far_pct", "frr_pct", "hter_pct", "ac_pct",
         "tpr_pct", "correct", "total", "share_pct"],
        metric_rows,
    )


def _write_identification_cell(cell_dir: Path, result) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(
        cell_dir / "predictions.csv",
        ["day", "trial", "subject", "seg_subject", "seg_day", "seg_trial", "segment",
         "predicted"],
        [
            [r.day, r.trial, r.subject, *r.segment_key, r.predicted]
            for r in result.records
        ],
    )
    labels = list(result.confusion.labels)
    _write_rows(
        cell_dir / "confusion.csv",
        ["true\\predicted", *labels],
        [[label, *result.confusion.counts[i]] for i, label in enumerate(labels)],
    )
    ident = metrics.identification_metrics(result.confusion)
    rows = [["IR", _pct(ident.ir)], ["pi_e", f"{float(ident.pi_e):.6f}"],
            ["kappa", f"{float(ident.kappa):.4f}"]]
    rows.extend(
        [f"SE:{label}", _pct(ident.sensitivity[label])]
        for label in labels
        if label in ident.sensitivity
    )
    _write_rows(cell_dir / "metrics.csv", ["metric", "value"], rows)


def _write_plan_audit(cell_dir: Path, plans) -> None:
    rows = []
    for plan in plans:
        for row in plan.to_rows():
            rows.append(
                [plan.client, plan.day, plan.trial, row["role"], row["subject"],
                 row["day"], row["trial"], row["label"]]
            )
    _write_rows(
        cell_dir / "plans.csv",
        ["client", "day", "trial", "role", "subject", "src_day", "src_trial", "label"],
        rows,
    )


def _cmd_eval(args, parser) -> int:
    settings = _resolve_eval_settings(args, parser)
    manifest = ds.load_dataset(settings.data)
    usable = manifest.duration_s - DEFAULT_TRIM_SECONDS
    for l_seg in settings.seg_lens:
        if l_seg <= 0 or l_seg > usable:
            parser.error(
                f"segment length {l_seg:g} s outside (0, {usable:g}] s of usable signal"
            )
    out = Path(settings.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = evaluate.worker_count(settings.threads)
    # echo the scientific configuration only; paths are incidental and would
    # break byte-identity between runs into different directories
    echo = [
        f"setups = {','.join(settings.setups)}",
        f"seg_lens = {','.join(f'{l:g}' for l in settings.seg_lens)}",
        f"classifiers = {','.join(settings.classifiers)}",
        f"features = {','.join(settings.features)}",
        f"include_sn = {str(settings.include_sn).lower()}",
        f"seed = {settings.seed}",
    ]
    (out / "eval_config.txt").write_text("\n".join(echo) + "\n")

    conditioned = evaluate.condition_recordings(manifest)
    cells = []
    summary = []
    try:
        _run_eval_cells(settings, manifest, conditioned, out, workers, cells, summary)
    except Exception as exc:
        # flag partial outputs before propagating to the exit-1 handler
        done = "\n".join(row[-1] for row in cells)
        (out / "FAILED.txt").write_text(
            f"evaluation aborted: {exc}\ncompleted cells:\n{done}\n"
        )
        raise
    _write_rows(
        out / CELLS_FILE,
        ["kind", "setup", "l_seg", "classifier", "features", "include_sn", "dir"],
        cells,
    )
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    for line in summary:
        print(line)
    return 0


def _run_eval_cells(settings, manifest, conditioned, out, workers, cells, summary):
    for l_seg in settings.seg_lens:
        store = evaluate.extract_features(conditioned, l_seg)
        for setup in settings.setups:
            for feature_set in settings.features:
                for classifier in settings.classifiers:
                    result = evaluate.run_verification(
                        manifest, store, setup=setup, classifier=classifier,
                        feature_set=feature_set, include_sn=settings.include_sn,
                        workers=workers, reject_distance=settings.reject_distance,
                    )
                    cell = f"ver_{setup}_L{l_seg:g}_{classifier}_{feature_set}"
                    _write_verification_cell(out / cell, result)
                    if settings.audit_plans:
                        _write_plan_audit(out / cell, protocol.enumerate_runs(manifest, setup))
                    cells.append(["ver", setup, f"{l_seg:g}", classifier, feature_set,
                                  str(settings.include_sn).lower(), cell])
                    c = result.slices["S_R"]
                    disp = metrics.display_verification(c)
                    summary.append(
                        f"ver {setup} L={l_seg:g} {classifier} {feature_set} S_R: "
                        f"TP {c.tp} FN {c.fn} FP {c.fp} TN {c.tn} | "
                        f"FAR {float(disp['far']):.1f} FRR {float(disp['frr']):.1f} "
                        f"HTER {float(disp['hter']):.2f} AC {float(disp['ac']):.1f}"
                    )
                ident = evaluate.run_identification(
                    manifest, store, setup=setup, feature_set=feature_set
                )
                cell = f"id_{setup}_L{l_seg:g}_{feature_set}"
                _write_identification_cell(out / cell, ident)
                cells.append(["id", setup, f"{l_seg:g}", "", feature_set, "", cell])
                im = metrics.identification_metrics(ident.confusion)
                summary.append(
                    f"id {setup} L={l_seg:g} {feature_set}: "
                    f"IR {float(im.ir) * 100:.1f} kappa {float(im.kappa):.2f}"
                )


# ---------------------------------------------------------------- report


def _read_cells(eval_dir: Path) -> list[dict]:
    cells_path = eval_dir / CELLS_FILE
    if not cells_path.exists():
        raise EaridError(
            f"no evaluation outputs under {eval_dir}: expected {cells_path} "
            "(and per-cell counts.csv/metrics.csv); run 'earid eval' first"
        )
    with open(cells_path, newline="") as fh:
        return list(csv.DictReader(fh))


def _cmd_report(args) -> int:
    eval_dir = Path(args.eval_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = _read_cells(eval_dir)

    ver_rows = []
    id_rows = []
    for cell in cells:
        cell_dir = eval_dir / cell["dir"]
        if cell["kind"] == "ver":
            with open(cell_dir / "counts.csv", newline="") as fh:
                counts = {row["slice"]: row for row in csv.DictReader(fh)}
            sr = counts["S_R"]
            c = metrics.BinaryCounts(int(sr["tp"]), int(sr["fn"]), int(sr["fp"]), int(sr["tn"]))
            disp = metrics.display_verification(c)
            ver_rows.append(
                [cell["setup"], cell["l_seg"], cell["classifier"], cell["features"],
                 c.tp, c.fn, c.fp, c.tn,
                 f"{float(disp['far']):.1f}", f"{float(disp['frr']):.1f}",
                 f"{float(disp['hter']):.2f}", f"{float(disp['ac']):.1f}"]
            )
        else:
            with open(cell_dir / "metrics.csv", newline="") as fh:
                values = {row["metric"]: row["value"] for row in csv.DictReader(fh)}
            se = [float(v) for k, v in values.items() if k.startswith("SE:")]
            stderr = float(np.std(se, ddof=1) / np.sqrt(len(se))) if len(se) > 1 else 0.0
            id_rows.append(
                [cell["setup"], cell["l_seg"], cell["features"], values["IR"],
                 values["kappa"], f"{stderr:.4f}"]
            )
    _write_rows(
        out / "verification_table.csv",
        ["setup", "l_seg", "classifier", "features", "tp", "fn", "fp", "tn",
         "far", "frr", "hter", "ac"],
        ver_rows,
    )
    _write_rows(
        out / "identification_table.csv",
        ["setup", "l_seg", "features", "ir_pct", "kappa", "se_stderr_pct"],
        id_rows,
    )

    manifest = ds.load_dataset(args.data)
    psd_rows = []
    for subject in manifest.clients:
        for day in (1, 2):
            curves = {}
            for trial in (1, 2, 3):
                rec = preprocess(manifest.load_recording(subject, day, trial))
                for ch_index, samples in ((1, rec.ch1), (2, rec.ch2)):
                    freqs, power = welch_series(samples, rec.fs, 20.0, 0.5)
                    mask = freqs <= 30.0
                    curves.setdefault(ch_index, []).append(power[mask])
                    for f, p in zip(freqs[mask], power[mask]):
                        psd_rows.append([subject, ch_index, day, trial, repr(float(f)),
                                         repr(float(p))])
            for ch_index, stack in curves.items():
                mean = np.mean(stack, axis=0)
                freqs = np.fft.rfftfreq(int(round(20.0 * manifest.fs)), 1.0 / manifest.fs)
                for f, p in zip(freqs[freqs <= 30.0], mean):
                    psd_rows.append([subject, ch_index, day, "avg", repr(float(f)),
                                     repr(float(p))])
    _write_rows(
        out / "psd_curves.csv",
        ["subject", "channel", "day", "trial", "freq_hz", "power"],
        psd_rows,
    )

    lines = ["verification (S_R slice, published-table convention)"]
    lines += [" ".join(str(v) for v in row) for row in ver_rows]
    lines.append("identification")
    lines += [" ".join(str(v) for v in row) for row in id_rows]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(f"report written to {out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "features":
            return _cmd_features(args)
        if args.command == "eval":
            return _cmd_eval(args, parser)
        if args.command == "report":
            return _cmd_report(args)
    except (EaridError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
