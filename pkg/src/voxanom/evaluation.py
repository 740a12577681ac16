"""Average-precision evaluation against pixel truth.

The headline metric is average precision over the precision-recall curve
swept across descending score thresholds, with tied scores grouped at a
single threshold:

    AP = sum_n (R_n - R_{n-1}) * P_n

Pixel-wise evaluation pools (score, label) voxel pairs across all cases
of a validation set into one AP, and also breaks AP out per anomaly
family. Sample-wise evaluation ranks whole cases by their sample score
(mean of the 100 hottest voxels) with healthy cases as the negatives.
The baseline subset drops the smoothed-edge families (200 of the 260
default cases), matching how hard-edge-only training regimes are graded.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EvaluationError
from .scoring import sample_score
from .validation import SMOOTHED_FAMILIES, VALIDATION_FAMILIES
from .volume import read_volume

EVAL_SUBSETS = ("full", "baseline")


def average_precision(scores, labels) -> float:
    """Step-wise AP with tie grouping; raises when no label is positive
    (precision-recall is undefined there, and returning 0 would read as a
    legitimate worst-case score)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise EvaluationError(f"{s.size} scores vs {y.size} labels")
    if s.size == 0:
        raise EvaluationError("empty score list")
    if not np.isfinite(s).all():
        raise EvaluationError("scores must be finite")
    y = y.astype(bool)
    total_pos = int(y.sum())
    if total_pos == 0:
        raise EvaluationError("no positive labels; AP is undefined")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # inclusive end index of every tie group along the sweep
    ends = np.append(np.nonzero(np.diff(s_sorted))[0], s.size - 1)
    tp = np.cumsum(y_sorted)[ends].astype(np.float64)
    precision = tp / (ends + 1)
    recall = tp / total_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


@dataclass(frozen=True)
class EvalReport:
    ap_overall: float
    ap_by_family: dict
    n_cases: int
    sample_scores: tuple
    config_echo: dict

    def __post_init__(self):
        if not 0.0 <= self.ap_overall <= 1.0:
            raise ValueError(f"ap_overall must be in [0, 1], got {self.ap_overall}")
        for fam, ap in self.ap_by_family.items():
            if not 0.0 <= ap <= 1.0:
                raise ValueError(f"ap for {fam} must be in [0, 1], got {ap}")


def load_manifest(manifest):
    """Accept a manifest path (entries resolved relative to it) or a
    pre-loaded (entries, base_dir) pair."""
    if isinstance(manifest, (str, Path)):
        path = Path(manifest)
        if path.is_dir():
            path = path / "validation_manifest.json"
        entries = json.loads(path.read_text())
        return entries, path.parent
    entries, base_dir = manifest
    return list(entries), Path(base_dir)


def score_path_for(scores_dir, image_path) -> Path:
    return Path(scores_dir) / (Path(image_path).stem + "_score.rvol")


def _select(entries, subset):
    if subset == "full":
        return list(entries)
    if subset == "baseline":
        return [e for e in entries if e["family"] not in SMOOTHED_FAMILIES]
    families = tuple(subset)
    for f in families:
        if f not in VALIDATION_FAMILIES:
            raise EvaluationError(f"unknown family {f!r} in subset")
    return [e for e in entries if e["family"] in families]


def _case_arrays(entry, base_dir, scores_dir, subsample, case_idx):
    truth_vol = read_volume(Path(base_dir) / entry["truth_path"])
    spath = score_path_for(scores_dir, entry["image_path"])
    if not spath.exists():
        raise EvaluationError(f"missing score map: {spath}")
    score_vol = read_volume(spath)
    if score_vol.dims != truth_vol.dims:
        raise EvaluationError(
            f"score dims {score_vol.dims} != truth dims {truth_vol.dims} for {spath}")
    scores = score_vol.data.reshape(-1)
    labels = truth_vol.data.reshape(-1) > 0.5
    if subsample is not None and scores.size > subsample.size:
        rng = np.random.default_rng([int(subsample.seed), case_idx])
        keep = rng.choice(scores.size, size=subsample.size, replace=False)
        scores, labels = scores[keep], labels[keep]
    return scores, labels


@dataclass(frozen=True)
class Subsample:
    """Uniform seeded voxel subsampling for memory-bound runs; the report
    echoes it so downsampled numbers are never mistaken for full ones."""

    n: int
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"subsample size must be >= 1, got {self.n}")

    @property
    def size(self) -> int:
        return int(self.n)


def evaluate_pixelwise(manifest, scores_dir, subset="full",
                       subsample: Subsample | None = None) -> EvalReport:
    """Pool voxels across cases into one AP, plus an AP per anomalous
    family (that family's cases only; healthy pools carry no positives)."""
    entries, base_dir = load_manifest(manifest)
    entries = _select(entries, subset)
    if not entries:
        raise EvaluationError("no cases selected")
    pooled_s, pooled_y = [], []
    by_family: dict = {}
    counts: dict = {}
    for idx, entry in enumerate(entries):
        s, y = _case_arrays(entry, base_dir, scores_dir, subsample, idx)
        fam = entry["family"]
        counts[fam] = counts.get(fam, 0) + 1
        pooled_s.append(s)
        pooled_y.append(y)
        if fam != "healthy":
            by_family.setdefault(fam, [[], []])
            by_family[fam][0].append(s)
            by_family[fam][1].append(y)
    ap = average_precision(np.concatenate(pooled_s), np.concatenate(pooled_y))
    ap_by_family = {}
    for fam, (ss, ys) in sorted(by_family.items()):
        labels = np.concatenate(ys)
        if labels.any():
            ap_by_family[fam] = average_precision(np.concatenate(ss), labels)
    echo = {"task": "pixel", "subset": subset if isinstance(subset, str) else list(subset),
            "case_counts": dict(sorted(counts.items())),
            "subsample": None if subsample is None else
            {"n": subsample.size, "seed": subsample.seed}}
    return EvalReport(ap, ap_by_family, len(entries), (), echo)


def evaluate_samplewise(manifest, scores_dir, subset="full",
                        top_k: int = 100) -> EvalReport:
    """Rank cases by sample score with label = (family != healthy); the
    per-family AP ranks that family's cases against the healthy ones."""
    entries, base_dir = load_manifest(manifest)
    entries = _select(entries, subset)
    if not entries:
        raise EvaluationError("no cases selected")
    rows = []
    counts: dict = {}
    for entry in entries:
        spath = score_path_for(scores_dir, entry["image_path"])
        if not spath.exists():
            raise EvaluationError(f"missing score map: {spath}")
        score = sample_score(read_volume(spath), top_k=top_k)
        fam = entry["family"]
        counts[fam] = counts.get(fam, 0) + 1
        rows.append((Path(entry["image_path"]).stem, fam, score))
    scores = np.array([r[2] for r in rows])
    labels = np.array([r[1] != "healthy" for r in rows])
    ap = average_precision(scores, labels)
    ap_by_family = {}
    for fam in sorted({r[1] for r in rows} - {"healthy"}):
        keep = [i for i, r in enumerate(rows) if r[1] in (fam, "healthy")]
        ap_by_family[fam] = average_precision(scores[keep], labels[keep])
    echo = {"task": "sample", "subset": subset if isinstance(subset, str) else list(subset),
            "case_counts": dict(sorted(counts.items())), "top_k": top_k}
    return EvalReport(ap, ap_by_family, len(entries), tuple(rows), echo)


def save_report(report: EvalReport, path) -> Path:
    path = Path(path)
    payload = {
        "ap_overall": report.ap_overall,
        "ap_by_family": dict(sorted(report.ap_by_family.items())),
        "n_cases": report.n_cases,
        "sample_scores": [list(r) for r in report.sample_scores],
        "config_echo": report.config_echo,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
