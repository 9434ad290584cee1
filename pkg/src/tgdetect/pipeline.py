"""Batch pipeline stages behind the CLI.

Every stage reads its inputs from, and writes its outputs to, the output
directory of a ``PipelineConfig``. Files are written atomically and their
contents depend only on the inputs and the root seed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from . import behavior as bh
from .config import PipelineConfig, derive_seed
from .errors import InputError, InsufficientTail, NoMaliciousLabels, TooFewRows
from .features import FeatureMatrix, Thresholds, extract_all
from .graph import build
from .ingest import (
    Granularity,
    Label,
    read_labels,
    read_transactions,
    segment,
    write_labels,
    write_transactions,
)
from .ml import (
    ExtraTreesModel,
    ExtraTreesParams,
    extratrees_train,
    flag_suspects,
    kmeans_fit,
    metrics,
    stratified_split,
    sweep_k,
)
from .ml.trees import schema_hash
from .statfit import ccdf, powerlaw_fit
from .tscharacterize import StatisticCatalog, select_features, standardize

log = logging.getLogger(__name__)

FIT_SERIES = ("indegree", "outdegree", "iet")


# ---------------------------------------------------------------------------
# io helpers
# ---------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    """Resolved output layout plus cached store contents."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self._txs = None
        self._labels = None

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    @property
    def transactions(self):
        if self._txs is None:
            p = self.path("store", "transactions.csv")
            if not p.exists():
                cmd_ingest(self.cfg)
            self._txs = read_transactions(p)
        return self._txs

    @property
    def labels(self):
        if self._labels is None:
            p = self.path("store", "labels.csv")
            if not p.exists():
                cmd_ingest(self.cfg)
            self._labels = read_labels(p) if p.exists() else {}
        return self._labels

    def is_malicious(self, accounts) -> np.ndarray:
        lab = self.labels
        return np.array([a in lab and lab[a].label is Label.MALICIOUS for a in accounts], dtype=int)

    def thresholds(self) -> Thresholds:
        return Thresholds(theta_t=self.cfg.theta_t, factor=self.cfg.burst_factor, theta_a=self.cfg.theta_a)

    def catalog(self) -> StatisticCatalog:
        return StatisticCatalog(tuple(self.cfg.statistics))


def _granularity(name) -> Granularity:
    return Granularity.parse(name)


# ---------------------------------------------------------------------------
# ingest / segment
# ---------------------------------------------------------------------------


def _segment_rows(subs):
    return [{"index": s.index, "start_block": s.start, "end_block": s.end,
             "n_transactions": len(s), "n_accounts": len(s.accounts)} for s in subs]


def cmd_ingest(cfg: PipelineConfig) -> dict:
    """Canonicalise inputs into ``store/`` and write ``manifest.json``."""
    if not cfg.transactions:
        raise InputError("no transactions file configured")
    src = Path(cfg.transactions)
    if not src.is_file():
        raise InputError(f"{src}: no such file")
    txs = read_transactions(src, cfg.input_format)
    ws = Workspace(cfg)
    buf = io.StringIO()
    write_transactions(txs, buf)
    atomic_write_text(ws.path("store", "transactions.csv"), buf.getvalue())
    labels = {}
    if cfg.labels:
        lp = Path(cfg.labels)
        if not lp.is_file():
            raise InputError(f"{lp}: no such file")
        labels = read_labels(lp)
    buf = io.StringIO()
    write_labels(labels.values(), buf)
    atomic_write_text(ws.path("store", "labels.csv"), buf.getvalue())

    counts = {k.value: 0 for k in Label}
    for lab in labels.values():
        counts[lab.label.value] += 1
    manifest = {
        "input": {"transactions_sha256": _sha256(src),
                  "labels_sha256": _sha256(cfg.labels) if cfg.labels else None},
        "n_transactions": len(txs),
        "n_accounts": len({a for t in txs for a in (t.source, t.destination)}),
        "block_range": [txs[0].block_number, txs[-1].block_number + 1],
        "labels": counts,
        "granularities": {g: _segment_rows(segment(txs, _granularity(g))) for g in cfg.granularities},
    }
    atomic_write_text(ws.path("manifest.json"), _json(manifest))
    return manifest


def cmd_segment(cfg: PipelineConfig, granularity: str | None = None) -> dict:
    ws = Workspace(cfg)
    out = {}
    for g in [granularity] if granularity else cfg.granularities:
        gr = _granularity(g)
        rows = _segment_rows(segment(ws.transactions, gr))
        atomic_write_text(ws.path("segments", f"{gr.name}.json"),
                          _json({"granularity": gr.name, "width_blocks": gr.width_blocks, "segments": rows}))
        out[gr.name] = rows
    return out


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _features_path(ws, g: Granularity, j: int) -> Path:
    return ws.path("features", g.name, f"sd_{j}.csv")


def _write_features(ws, g, j, fm: FeatureMatrix):
    rows = [[a, *(_fmt(v) for v in row)] for a, row in zip(fm.accounts, fm.values)]
    atomic_write_text(_features_path(ws, g, j), _csv(["account", *fm.columns], rows))


def _read_features(path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        accounts, vals = [], []
        for row in r:
            accounts.append(row[0])
            vals.append([float(v) for v in row[1:]])
    values = np.asarray(vals, dtype=np.float64).reshape(len(accounts), len(header) - 1)
    return FeatureMatrix(accounts, header[1:], values)


def feature_matrix(ws: Workspace, g: Granularity, j: int, subs=None) -> FeatureMatrix:
    """Features of SD ``j``; read from disk when already extracted."""
    p = _features_path(ws, g, j)
    if p.exists():
        fm = _read_features(p)
    else:
        subs = subs or segment(ws.transactions, g)
        sd = subs[j]
        graph = build(sd)
        fm = extract_all(graph, sorted(sd.accounts), ws.thresholds(), ws.catalog())
        _write_features(ws, g, j, fm)
        schema = fm.schema()
        schema.update(granularity=g.name, sd_index=j, start_block=sd.start, end_block=sd.end)
        atomic_write_text(ws.path("features", g.name, f"sd_{j}.schema.json"), _json(schema))
    fm.labels = ws.is_malicious(fm.accounts)
    return fm


def cmd_features(cfg: PipelineConfig, granularity: str | None = None, sd="all") -> list[Path]:
    ws = Workspace(cfg)
    g = _granularity(granularity or cfg.analysis_granularity)
    subs = segment(ws.transactions, g)
    idx = range(len(subs)) if sd in (None, "all") else [int(sd)]
    out = []
    for j in idx:
        if not 0 <= j < len(subs):
            raise InputError(f"sub-dataset index {j} out of range 0..{len(subs) - 1}")
        p = _features_path(ws, g, j)
        if p.exists():
            p.unlink()  # recompute
        feature_matrix(ws, g, j, subs)
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def _analysis_matrix(ws) -> FeatureMatrix:
    g = _granularity(ws.cfg.analysis_granularity)
    if g is not Granularity.All:
        subs = segment(ws.transactions, g)
        parts = [feature_matrix(ws, g, j, subs) for j in range(len(subs))]
        parts = [p for p in parts if p.accounts]
        # rows are (account, SD) pairs
        fm = FeatureMatrix([f"{a}@{j}" for j, p in enumerate(parts) for a in p.accounts],
                           parts[0].columns, np.vstack([p.values for p in parts]))
        fm.labels = np.concatenate([p.labels for p in parts])
        return fm
    return feature_matrix(ws, g, 0)


def cmd_select(cfg: PipelineConfig) -> dict:
    ws = Workspace(cfg)
    fm = _analysis_matrix(ws)
    sel = select_features(fm.values, fm.labels, fm.columns, cfg.top_k, cfg.correlation_threshold, cfg.pca_variance)
    report = sel.report()
    report["n_rows"] = len(fm.accounts)
    report["n_input_columns"] = len(fm.columns)
    atomic_write_text(ws.path("select", "report.json"), _json(report))
    kept = fm.select(sel.retained)
    atomic_write_text(ws.path("select", "selected.csv"), _csv(
        ["account", "malicious", *kept.columns],
        [[a, int(y), *(_fmt(v) for v in row)] for a, y, row in zip(kept.accounts, fm.labels, kept.values)]))
    pruned = [d[0] for d in sel.dropped]
    atomic_write_text(ws.path("select", "pruned.csv"), _csv(
        ["column", "against", "r"], [[d, k, _fmt(r)] for d, k, r in sel.dropped]))
    T = sel.pca.transformed
    atomic_write_text(ws.path("select", "pca.csv"), _csv(
        ["account", "malicious", *(f"PC{i + 1}" for i in range(T.shape[1]))],
        [[a, int(y), *(_fmt(v) for v in row)] for a, y, row in zip(fm.accounts, fm.labels, T)]))
    return {"selected": sel.retained, "pruned": pruned, "n_components": sel.pca.n_components}


def _selected_columns(ws) -> list[str]:
    p = ws.path("select", "report.json")
    if not p.exists():
        cmd_select(ws.cfg)
    return json.loads(p.read_text(encoding="utf-8"))["retained_after_correlation"]


def stage_matrix(ws, fm: FeatureMatrix | None = None):
    """(accounts, labels, column names, raw values) for the configured stage."""
    fm = fm if fm is not None else _analysis_matrix(ws)
    stage = ws.cfg.feature_stage
    if stage == "raw":
        return fm.accounts, fm.labels, fm.columns, fm.values
    sub = fm.select(_selected_columns(ws))
    if stage == "selected":
        return fm.accounts, fm.labels, sub.columns, sub.values
    rep = json.loads(ws.path("select", "report.json").read_text(encoding="utf-8"))["pca"]
    Z, _, _ = standardize(sub.values)
    T = Z @ np.asarray(rep["loadings"]).T
    return fm.accounts, fm.labels, [f"PC{i + 1}" for i in range(T.shape[1])], T


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


def _exclude_idx(cfg, columns):
    return [i for i, c in enumerate(columns) if any(c == x or c.startswith(x + "__") for x in cfg.similarity_exclude)]


def cmd_cluster(cfg: PipelineConfig, epsilon: float | None = None) -> dict:
    ws = Workspace(cfg)
    eps = cfg.epsilon if epsilon is None else epsilon
    accounts, y, columns, values = stage_matrix(ws)
    X = values if cfg.feature_stage == "pca" else standardize(values)[0]
    seeds = [derive_seed(cfg.seed, f"cluster:{i}") for i in range(cfg.seeds_per_k)]
    kmax = min(cfg.k_max, X.shape[0] - 1)
    if kmax < cfg.k_min:
        raise TooFewRows(f"{X.shape[0]} rows cannot support k >= {cfg.k_min}")
    sweep = sweep_k(X, (cfg.k_min, kmax), seeds)
    model = sweep.best_model
    atomic_write_text(ws.path("cluster", "sweep.csv"), _csv(
        ["k", "silhouette", "seed", "inertia"],
        [[r["k"], _fmt(r["silhouette"]), r["seed"], _fmt(r["inertia"])] for r in sweep.table]))
    atomic_write_text(ws.path("cluster", "centroids.csv"), _csv(
        ["cluster", *columns], [[c, *(_fmt(v) for v in row)] for c, row in enumerate(model.centroids)]))
    atomic_write_text(ws.path("cluster", "assignments.csv"), _csv(
        ["account", "malicious", "cluster"], [[a, int(m), int(c)] for a, m, c in zip(accounts, y, model.labels)]))
    report = flag_suspects(model, X, y, eps, assignments=model.labels, accounts=accounts,
                           exclude_columns=_exclude_idx(cfg, columns))
    out = {
        "best_k": sweep.best_k,
        "best_silhouette": sweep.best_score,
        "feature_stage": cfg.feature_stage,
        "columns": columns,
        "schema_hash": schema_hash(columns),
        "excluded_from_similarity": [columns[i] for i in _exclude_idx(cfg, columns)],
        "seed": model.seed,
        "inertia": model.inertia,
        **report.to_dict(),
    }
    atomic_write_text(ws.path("cluster", "suspects.json"), _json(out))
    return out


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def et_params(cfg: PipelineConfig) -> ExtraTreesParams:
    return ExtraTreesParams(
        n_estimators=cfg.et_n_estimators, criterion=cfg.et_criterion, max_features=cfg.et_max_features,
        max_samples=cfg.et_max_samples, bootstrap=cfg.et_bootstrap, min_samples_leaf=cfg.et_min_samples_leaf,
        min_samples_split=cfg.et_min_samples_split, class_weight=cfg.et_class_weight,
    )


def cmd_classify(cfg: PipelineConfig) -> dict:
    ws = Workspace(cfg)
    accounts, y, columns, X = stage_matrix(ws)
    tr, te = stratified_split(y, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    model = extratrees_train(X[tr], y[tr], et_params(cfg), derive_seed(cfg.seed, "extratrees"),
                             columns, n_jobs=cfg.n_jobs)
    atomic_write_text(ws.path("classify", "model.json"), model.to_json() + "\n")
    proba = model.predict_proba(X)
    pred = model.classes[np.argmax(proba, axis=1)]
    mal_col = int(np.nonzero(model.classes == 1)[0][0]) if 1 in model.classes else None
    rows = {
        "test": metrics(y[te], pred[te]),
        "train": metrics(y[tr], pred[tr]),
    }
    out = {
        "feature_stage": cfg.feature_stage,
        "n_features": len(columns),
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "params": model.to_dict()["params"],
        "rows": rows,
    }
    atomic_write_text(ws.path("classify", "metrics.json"), _json(out))
    split = np.full(len(accounts), "train", dtype=object)
    split[te] = "test"
    atomic_write_text(ws.path("classify", "predictions.csv"), _csv(
        ["account", "split", "y_true", "y_pred", "score_malicious"],
        [[a, s, int(t), int(p), _fmt(proba[i, mal_col] if mal_col is not None else 0.0)]
         for i, (a, s, t, p) in enumerate(zip(accounts, split, y, pred))]))
    return out


def load_model(path) -> ExtraTreesModel:
    return ExtraTreesModel.from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# behaviour
# ---------------------------------------------------------------------------


def sd_flags(ws, g: Granularity, j: int, subs) -> dict[str, int]:
    """Per-account 0/1 flags for one SD: known-malicious or flagged suspect."""
    cfg = ws.cfg
    fm = feature_matrix(ws, g, j, subs)
    flags = {a: int(m) for a, m in zip(fm.accounts, fm.labels)}
    if not fm.labels.any():
        return flags
    if cfg.feature_stage == "raw":
        cols = fm.columns
    else:
        cols = _selected_columns(ws)
    X = standardize(fm.select(cols).values)[0]
    n_distinct = np.unique(X, axis=0).shape[0]
    k = min(cfg.behavior_k, n_distinct)
    if k < 2:
        return flags
    model = kmeans_fit(X, k, derive_seed(cfg.seed, f"behavior:{g.name}:{j}"))
    try:
        rep = flag_suspects(model, X, fm.labels, cfg.epsilon, assignments=model.labels,
                            accounts=fm.accounts, exclude_columns=_exclude_idx(cfg, cols))
    except NoMaliciousLabels:
        return flags
    for a in rep.flagged:
        flags[a] = 1
    return flags


def cmd_behavior(cfg: PipelineConfig) -> dict:
    ws = Workspace(cfg)
    vectors = []
    for name in cfg.granularities:
        g = _granularity(name)
        subs = segment(ws.transactions, g)
        per_account: dict[str, dict[int, int]] = {}
        for j, sd in enumerate(subs):
            if not sd.accounts:
                continue
            for a, f in sd_flags(ws, g, j, subs).items():
                per_account.setdefault(a, {})[j] = f
        vectors += [bh.behavior_vector(per_account[a], a, g.name) for a in sorted(per_account)]
    reports = bh.granularity_report(vectors, cfg.behavior_p_threshold)
    atomic_write_text(ws.path("behavior", "vectors.csv"), bh.vectors_csv(vectors))
    atomic_write_text(ws.path("behavior", "histograms.csv"), bh.histograms_csv(reports))
    known = {a for a, lab in ws.labels.items() if lab.label is Label.MALICIOUS}
    cohorts = {
        g: {
            "p_threshold": cfg.behavior_p_threshold,
            "never_flagged": rep.never_flagged,
            "likely_malicious": rep.likely_malicious,
            "likely_malicious_unlabeled": [a for a in rep.likely_malicious if a not in known],
            "changed_at_least_once": sum(rep.change_histogram.values()),
        }
        for g, rep in reports.items()
    }
    atomic_write_text(ws.path("behavior", "cohorts.json"), _json(cohorts))
    return {g: {k: (len(v) if isinstance(v, list) else v) for k, v in c.items()} for g, c in cohorts.items()}


# ---------------------------------------------------------------------------
# distribution fitting
# ---------------------------------------------------------------------------


def fit_samples(ws, series: str) -> np.ndarray:
    g = build(segment(ws.transactions, _granularity(ws.cfg.analysis_granularity))[0])
    if series == "indegree":
        return np.array([g.in_degree_agg(a) for a in g.accounts], dtype=np.float64)
    if series == "outdegree":
        return np.array([g.out_degree_agg(a) for a in g.accounts], dtype=np.float64)
    if series == "iet":
        parts = [np.diff(g.events(a).blocks) for a in g.accounts]
        return np.concatenate([p for p in parts if p.size] or [np.zeros(0)]).astype(np.float64)
    raise InputError(f"unknown series {series!r}; expected one of {FIT_SERIES}")


def cmd_fitdist(cfg: PipelineConfig, series: str = "indegree") -> dict:
    ws = Workspace(cfg)
    x = fit_samples(ws, series)
    fit = powerlaw_fit(x, min_tail=cfg.fit_min_tail)
    out = {"series": series, "n_samples": int(x.size), **fit.to_dict()}
    atomic_write_text(ws.path("fitdist", f"{series}.json"), _json(out))
    vals, p = ccdf(x[x > 0])
    atomic_write_text(ws.path("fitdist", f"{series}_ccdf.csv"),
                      _csv(["x", "ccdf"], [[_fmt(a), _fmt(b)] for a, b in zip(vals, p)]))
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _maybe_json(p: Path):
    return json.loads(p.read_text(encoding="utf-8")) if p.exists() else None


def cmd_report(cfg: PipelineConfig) -> dict:
    """Collect stage summaries into ``report.json``; missing stages are null."""
    ws = Workspace(cfg)
    manifest = _maybe_json(ws.path("manifest.json"))
    sel = _maybe_json(ws.path("select", "report.json"))
    clu = _maybe_json(ws.path("cluster", "suspects.json"))
    cls = _maybe_json(ws.path("classify", "metrics.json"))
    coh = _maybe_json(ws.path("behavior", "cohorts.json"))
    fits = {s: _maybe_json(ws.path("fitdist", f"{s}.json")) for s in FIT_SERIES}
    report = {
        "config": cfg.to_dict() | {"output_dir": None},
        "dataset": None if manifest is None else {
            k: manifest[k] for k in ("n_transactions", "n_accounts", "block_range", "labels")},
        "selection": None if sel is None else {
            "selected": sel["retained_after_correlation"],
            "pca_components": sel.get("pca", {}).get("n_components")},
        "clustering": None if clu is None else {
            k: clu[k] for k in ("best_k", "best_silhouette", "cluster", "malicious_in_cluster", "cluster_size")}
            | {"n_flagged": len(clu["flagged"])},
        "classification": None if cls is None else cls["rows"],
        "behavior": None if coh is None else {
            g: {"never_flagged": len(c["never_flagged"]), "likely_malicious": len(c["likely_malicious"]),
                "changed_at_least_once": c["changed_at_least_once"]} for g, c in coh.items()},
        "power_law": {s: (None if f is None else {k: f[k] for k in ("alpha", "x_min", "ks", "n_tail")})
                      for s, f in fits.items()},
    }
    atomic_write_text(ws.path("report.json"), _json(report))
    return report


def run_all(cfg: PipelineConfig, stages=("ingest", "features", "select", "cluster", "classify", "behavior")) -> None:
    for st in stages:
        if st == "ingest":
            cmd_ingest(cfg)
        elif st == "features":
            cmd_features(cfg)
        elif st == "select":
            cmd_select(cfg)
        elif st == "cluster":
            cmd_cluster(cfg)
        elif st == "classify":
            cmd_classify(cfg)
        elif st == "behavior":
            cmd_behavior(cfg)
        elif st == "fitdist":
            for s in FIT_SERIES:
                try:
                    cmd_fitdist(cfg, s)
                except InsufficientTail as exc:
                    log.warning("fitdist %s skipped: %s", s, exc)
        elif st == "report":
            cmd_report(cfg)
        else:
            raise InputError(f"unknown stage {st!r}")
