"""Experiment orchestration and CSV emission.

Every image gets a ground-truth watermark derived from the master seed.
Each (image, attack) pair draws its randomness from a child seed keyed by
the image index and the attack label, so adding or removing an attack
leaves the others untouched.  Per-image work can run in a process pool;
rows are merged in image order, so the output files depend only on the
configuration and the data.  Wall-clock timings go to a separate file to
keep the result tables byte-reproducible.
"""

import csv
import hashlib
import json
import math
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from .. import _kernels
from ..blackbox import (
    BlackBoxConfig,
    DetectorOracle,
    hopskipjump,
    wevade_b_q,
    wevade_b_s,
)
from ..codecs.base import load_codec
from ..detection import (
    BoundInputs,
    Detector,
    bound_surrogate,
    bound_wevade2,
    estimate_beta_gamma,
    flags,
    fpr,
)
from ..errors import DomainError
from ..metrics import bitwise_accuracy, l2_norm, linf_norm, random_watermark, ssim
from ..postprocess.tuning import PostProcessSpec
from ..whitebox import WhiteBoxConfig, wevade_w
from .config import ExperimentConfig
from .corpus import TEST_STREAM, SyntheticCorpus, ingest

PACKAGE_VERSION = "0.1.0"
BASE_COLUMNS = (
    "experiment",
    "image",
    "attack",
    "params",
    "status",
    "ba",
    "linf",
    "l2",
    "ssim",
    "queries",
    "iterations",
    "constraint_satisfied",
)
AGG_COLUMNS = (
    "attack",
    "mode",
    "tau",
    "count",
    "positive_rate",
    "evasion_rate",
    "evasion_ci_low",
    "evasion_ci_high",
    "mean_ba",
    "mean_linf",
    "mean_l2",
    "mean_ssim",
    "mean_queries",
)


def child_seed(master: int, index: int, label: str) -> int:
    ss = np.random.SeedSequence([master, index, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def groundtruth(master: int, index: int, n: int) -> np.ndarray:
    return random_watermark(n, np.random.default_rng(child_seed(master, index, "groundtruth")))


def verdict_column(mode: str, tau: float) -> str:
    return f"{mode}@{tau:.6g}"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def _config_fields(cls, params: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(params) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} parameters: {sorted(unknown)}")
    return dict(params)


# ---------------------------------------------------------------------------
# per-image work
# ---------------------------------------------------------------------------

_STATE = {}


def _load_state(cfg_dict: dict):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    codec = load_codec(cfg.codec)
    surrogate = load_codec(cfg.surrogate) if cfg.surrogate else None
    _STATE.update(cfg=cfg, codec=codec, surrogate=surrogate)


def run_attack(spec, codec, surrogate, image_w, w, cfg: ExperimentConfig, seed: int, oracle_tau: float):
    """Run one configured attack; returns an AttackResult-like record."""
    name, params = spec.name, dict(spec.params)
    if name in ("wevade-w-i", "wevade-w-ii", "wevade-b-s"):
        params.setdefault("epsilon", cfg.epsilon)
        wcfg = WhiteBoxConfig(**_config_fields(WhiteBoxConfig, {**params, "seed": seed}))
        if name == "wevade-b-s":
            if surrogate is None:
                raise ValueError("wevade-b-s needs a surrogate codec")
            return wevade_b_s(surrogate, image_w, wcfg)
        return wevade_w(codec, image_w, "I" if name == "wevade-w-i" else "II", wcfg)
    if name in ("wevade-b-q", "hopskipjump"):
        bcfg = BlackBoxConfig(**_config_fields(BlackBoxConfig, {**params, "seed": seed % (2**63)}))
        oracle = DetectorOracle(Detector(w, oracle_tau, cfg.oracle_mode, codec))
        return (wevade_b_q if name == "wevade-b-q" else hopskipjump)(oracle, image_w, bcfg)
    if "param" not in params:
        raise ValueError(f"{name} needs a 'param' value")
    out = PostProcessSpec(name, params["param"], seed).apply(image_w)
    return _Plain(out, 0, 0, True)


@dataclass
class _Plain:
    image: np.ndarray
    queries: int
    iterations: int
    constraint_satisfied: bool


def _row(cfg, image_id, label, params, reference, image, w, codec, taus, attack=None, error=""):
    row = {
        "experiment": cfg.experiment_id,
        "image": image_id,
        "attack": label,
        "params": json.dumps(params, sort_keys=True),
        "status": error or "ok",
    }
    if error:
        for c in BASE_COLUMNS[5:]:
            row[c] = ""
        for m in cfg.modes:
            for t in taus:
                row[verdict_column(m, t)] = ""
        return row
    bits = codec.decode(image)
    matches = int(np.count_nonzero(bits == w))
    delta = image - reference
    row.update(
        ba=bitwise_accuracy(bits, w),
        linf=linf_norm(delta),
        l2=l2_norm(delta),
        ssim=ssim(reference, image),
        queries=getattr(attack, "queries", 0),
        iterations=getattr(attack, "iterations", 0),
        constraint_satisfied=getattr(attack, "constraint_satisfied", True),
    )
    for m in cfg.modes:
        for t in taus:
            row[verdict_column(m, t)] = flags(matches, codec.n, t, m)
    return row


def process_image(index: int, image_id: str, image: np.ndarray):
    """All rows for one image, plus per-row wall times."""
    cfg, codec, surrogate = _STATE["cfg"], _STATE["codec"], _STATE["surrogate"]
    taus = cfg.resolved_taus(codec.n)
    oracle_tau = cfg.resolved_oracle_tau(codec.n)
    w = groundtruth(cfg.seed, index, codec.n)
    image_w = codec.embed(image, w)
    rows, times = [], []
    t0 = time.perf_counter()
    rows.append(_row(cfg, image_id, "original", {}, image, image, w, codec, taus))
    rows.append(_row(cfg, image_id, "watermarked", {}, image_w, image_w, w, codec, taus))
    times += [("original", 0.0), ("watermarked", time.perf_counter() - t0)]
    for spec in cfg.attacks:
        t0 = time.perf_counter()
        try:
            res = run_attack(spec, codec, surrogate, image_w, w, cfg, child_seed(cfg.seed, index, spec.label), oracle_tau)
            rows.append(_row(cfg, image_id, spec.label, spec.params, image_w, res.image, w, codec, taus, attack=res))
        except Exception as exc:  # recorded per row; the run continues
            rows.append(_row(cfg, image_id, spec.label, spec.params, image_w, None, w, codec, taus, error=f"{type(exc).__name__}: {exc}"))
        times.append((spec.label, time.perf_counter() - t0))
    return rows, times


def _worker(args):
    return process_image(*args)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    rows: list
    aggregates: list
    theory: list
    manifest: dict
    timings: list
    columns: list

    @property
    def ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.rows)


def load_images(cfg: ExperimentConfig):
    if cfg.dataset is None:
        corpus = SyntheticCorpus(cfg.samples, seed=cfg.seed, stream=TEST_STREAM)
        return [f"synthetic_{i:05d}" for i in range(cfg.samples)], list(corpus)
    return ingest(cfg.dataset, cfg.samples, seed=cfg.seed)


def run_experiment(cfg: ExperimentConfig, images=None) -> ExperimentResult:
    """Run every configured attack on every image; returns rows, aggregates and theory."""
    _load_state(cfg.to_dict())
    codec = _STATE["codec"]
    ids, imgs = images if images is not None else load_images(cfg)
    taus = cfg.resolved_taus(codec.n)
    work = [(i, ids[i], imgs[i]) for i in range(len(imgs))]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_load_state, initargs=(cfg.to_dict(),)) as pool:
            outputs = list(pool.map(_worker, work))
    else:
        outputs = [_worker(a) for a in work]
    rows, timings = [], []
    for (_, image_id, _), (r, t) in zip(work, outputs):
        rows.extend(r)
        timings.extend((image_id, label, secs) for label, secs in t)
    columns = list(BASE_COLUMNS) + [verdict_column(m, t) for m in cfg.modes for t in taus]
    aggregates = aggregate(rows, cfg.modes, taus)
    theory = theory_rows(codec, cfg, taus, imgs)
    manifest = build_manifest(cfg, taus, ids)
    return ExperimentResult(rows, aggregates, theory, manifest, timings, columns)


def clopper_pearson(k: int, n: int, level: float = 0.95):
    if n == 0:
        return math.nan, math.nan
    a = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return lo, hi


def aggregate(rows, modes, taus):
    labels = list(dict.fromkeys(r["attack"] for r in rows))
    out = []
    for label in labels:
        ok = [r for r in rows if r["attack"] == label and r["status"] == "ok"]
        n = len(ok)

        def mean(col):
            return float(np.mean([float(r[col]) for r in ok])) if n else math.nan

        for m in modes:
            for t in taus:
                pos = sum(1 for r in ok if r[verdict_column(m, t)])
                lo, hi = clopper_pearson(n - pos, n)
                out.append(
                    {
                        "attack": label,
                        "mode": m,
                        "tau": t,
                        "count": n,
                        "positive_rate": pos / n if n else math.nan,
                        "evasion_rate": (n - pos) / n if n else math.nan,
                        "evasion_ci_low": lo,
                        "evasion_ci_high": hi,
                        "mean_ba": mean("ba"),
                        "mean_linf": mean("linf"),
                        "mean_l2": mean("l2"),
                        "mean_ssim": mean("ssim"),
                        "mean_queries": mean("queries"),
                    }
                )
    return out


def theory_rows(codec, cfg: ExperimentConfig, taus, images):
    gamma = None
    if cfg.surrogate:
        surrogate = _STATE["surrogate"]
        marked = [codec.embed(img, groundtruth(cfg.seed, i, codec.n)) for i, img in enumerate(images)]
        if surrogate.n == codec.n:
            gamma = estimate_beta_gamma(surrogate, codec, marked, cfg.beta)
    out = []
    for t in taus:
        row = {"tau": t}
        for m in ("single", "double"):
            try:
                row[f"fpr_{m}"] = fpr(t, codec.n, m)
            except DomainError:
                row[f"fpr_{m}"] = math.nan
            b = BoundInputs(codec.n, t, epsilon=cfg.epsilon)
            row[f"bound_wevade_w_ii_{m}"] = bound_wevade2(b, m)
            if gamma is not None:
                bs = BoundInputs(codec.n, t, epsilon=cfg.epsilon, beta=cfg.beta, gamma=gamma)
                row[f"bound_wevade_b_s_{m}"] = bound_surrogate(bs, m)
        if gamma is not None:
            row["beta"] = cfg.beta
            row["gamma"] = gamma
        out.append(row)
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(cfg: ExperimentConfig, taus, ids) -> dict:
    return {
        "config": cfg.to_dict(),
        "resolved": {
            "taus": taus,
            "oracle_tau": cfg.resolved_oracle_tau(_STATE["codec"].n),
            "image_ids": list(ids),
            "codec_sha256": _sha256(cfg.codec),
            "surrogate_sha256": _sha256(cfg.surrogate) if cfg.surrogate else None,
        },
        "defaults": {
            "whitebox": asdict(WhiteBoxConfig()),
            "blackbox": asdict(BlackBoxConfig()),
        },
        "software": {
            "wevade": PACKAGE_VERSION,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "backend": _kernels.BACKEND,
        },
    }


def _write_csv(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([fmt(r.get(c, "")) for c in columns])


def emit(result: ExperimentResult, output) -> dict:
    """Write results.csv, aggregates.csv, theory.csv, manifest.json and timings.csv."""
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("results.csv", "aggregates.csv", "theory.csv", "manifest.json", "timings.csv")}
    _write_csv(paths["results.csv"], result.columns, result.rows)
    _write_csv(paths["aggregates.csv"], AGG_COLUMNS, result.aggregates)
    theory_cols = list(dict.fromkeys(k for r in result.theory for k in r))
    _write_csv(paths["theory.csv"], theory_cols, result.theory)
    paths["manifest.json"].write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    with paths["timings.csv"].open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "attack", "seconds"])
        for image_id, label, secs in result.timings:
            writer.writerow([image_id, label, f"{secs:.6f}"])
    return paths


def config_from_manifest(path) -> ExperimentConfig:
    doc = json.loads(Path(path).read_text())
    return ExperimentConfig.from_dict(doc["config"])
