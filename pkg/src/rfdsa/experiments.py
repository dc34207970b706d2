"""Desk-scale experiment drivers shared by the CLI and the acceptance tests.

Every driver takes a root seed and an optional output directory, derives all
randomness from named sub-streams, and returns a result dict with a ``checks``
list of ``(name, value, op, threshold, passed)`` rows.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from rfdsa.nnet import checkpoint
from rfdsa.nnet.ewc import fisher_diagonal
from rfdsa.nnet.model import (
    CLASS_LABELS, NeuralModel, accuracy, default_model, extract_features, model_confusion, predict_scores,
)
from rfdsa.nnet.train import TrainConfig, train
from rfdsa.outlier import (
    INLIER, OUTLIER, kmeans_fit, kmeans_label_outlier_cluster, mcd_fit, reduce_features, sweep_contamination,
)
from rfdsa.seeding import substream
from rfdsa.separation import (
    MixtureObservation, fastica, matched_correlation, random_orthogonal, separate, whiten, write_trials_csv,
)
from rfdsa.sigsynth import (
    DEFAULT_SNR_GRID, IDLE, Dataset, DatasetSpec, IQFrame, ModulationKind, SignalClass, apply_awgn, class_of,
    kinds_of_class, make_dataset, superimpose, synth_clean, synth_frame,
)

log = logging.getLogger(__name__)

ALL_KINDS = tuple(k.value for k in ModulationKind) + (IDLE,)
TASK_A = ("QPSK", "8PSK", "CPFSK", "AM-SSB", "GFSK")
TASK_B = ("QAM16", "PAM4", "WBFM")
INLIER_KINDS = ("QPSK", "8PSK", "CPFSK", "AM-SSB", "AM-DSB", "GFSK")
OUTLIER_KINDS = ("QAM16", "QAM64", "PAM4", "WBFM")
DESK_LR = 1e-3


def check(name: str, value: float, op: str, threshold: float) -> tuple:
    ok = value >= threshold if op == ">=" else value <= threshold if op == "<=" else value > threshold
    return (name, float(value), op, float(threshold), bool(ok))


def _out(path) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _labels(ds: Dataset, kinds: Sequence[str]) -> np.ndarray:
    return np.array([list(kinds).index(str(k.value if hasattr(k, "value") else k)) for k in ds.modkinds])


# --- baseline classifier ------------------------------------------------------------

@dataclass(frozen=True)
class BaseConfig:
    kinds: tuple = ALL_KINDS
    snr_grid: tuple = DEFAULT_SNR_GRID
    train_per_kind: int = 60
    test_per_kind: int = 40
    train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=60)
    confusion_snrs: tuple = (0.0, 10.0, 18.0)


def class_dataset(kinds: Sequence[str], snr_grid: Sequence[float], per_kind: int, seed: int) -> Dataset:
    if not snr_grid:
        raise ValueError("SNR grid must not be empty")
    return make_dataset(DatasetSpec(tuple(kinds), tuple(snr_grid), per_kind, seed))


def train_classifier(kinds, snr_grid, per_kind, seed, config: TrainConfig) -> tuple[NeuralModel, object]:
    """4-class (signal category) classifier over the given kinds and SNRs."""
    ds = class_dataset(kinds, snr_grid, per_kind, seed)
    model = default_model(CLASS_LABELS, seed=seed)
    return train(model, ds.channels(), ds.classes, config.with_(seed=seed))


def train_base(seed: int = 0, out=None, config: BaseConfig = BaseConfig()) -> dict:
    """Train the 4-class classifier; report accuracy per SNR and confusion matrices."""
    out = _out(out)
    t0 = time.time()
    model, hist = train_classifier(config.kinds, config.snr_grid, config.train_per_kind,
                                   seed * 1000 + 1, config.train)
    test = class_dataset(config.kinds, config.snr_grid, config.test_per_kind, seed * 1000 + 2)
    scores = predict_scores(model, test.channels())
    pred = np.argmax(scores, axis=1)
    rows = []
    for snr in config.snr_grid:
        sel = test.snr_db == snr
        rows.append((snr, float(np.mean(pred[sel] == test.classes[sel]))))
    overall = float(np.mean(pred == test.classes))
    confusions = {}
    for snr in config.confusion_snrs:
        sel = test.snr_db == snr
        if sel.any():
            confusions[snr] = model_confusion(model, test.channels()[sel], test.classes[sel])[1]
    result = {"accuracy": overall, "accuracy_by_snr": rows, "epochs": len(hist.rows),
              "runtime_s": time.time() - t0, "model": model,
              "checks": [check("base_accuracy", overall, ">=", 0.0)]}
    if out is not None:
        result["checkpoint_sha256"] = checkpoint.save(model, out / "model.ckpt")
        _write_rows(out / "accuracy_by_snr.csv", ["snr_db", "accuracy"], rows)
        hist.to_csv(out / "history.csv")
        for snr, mat in confusions.items():
            _write_rows(out / f"confusion_{int(snr)}db.csv", ["true"] + [c.label for c in SignalClass],
                        [[SignalClass(i).label] + list(r) for i, r in enumerate(mat)])
    return result


def baseline_accuracy(seed: int = 0, kinds=("idle", "QPSK", "QAM16", "GFSK"), per_class: int = 500,
                      snr_db: float = 18.0, config: TrainConfig = TrainConfig(learning_rate=DESK_LR,
                                                                               max_epochs=60)) -> dict:
    """Single-SNR 4-class check: one kind per class, ``per_class`` frames each."""
    t0 = time.time()
    model, hist = train_classifier(kinds, (snr_db,), per_class, seed * 1000 + 11, config)
    test = class_dataset(kinds, (snr_db,), per_class // 2, seed * 1000 + 12)
    acc = accuracy(model, test.channels(), test.classes)
    return {"accuracy": acc, "epochs": len(hist.rows), "runtime_s": time.time() - t0,
            "checks": [check("baseline_accuracy", acc, ">=", 0.90)]}


# --- continual learning ---------------------------------------------------------------

@dataclass(frozen=True)
class EWCConfig:
    task_a: tuple = TASK_A
    task_b: tuple = TASK_B
    snr_db: float = 18.0
    train_per_kind: int = 400
    test_per_kind: int = 200
    # SELU convs: a ReLU channel that is silent on Task A has zero Fisher weight,
    # so Task B can revive it unopposed
    conv_activation: str = "selu"
    task_a_train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=80, patience=10)
    sgd_train: TrainConfig = TrainConfig(learning_rate=5e-3, max_epochs=20, patience=20, optimizer="sgd")
    ewc_train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=40, patience=8)
    lam: float = 1e5
    fisher_samples: int = 500


def ewc_demo(seed: int = 0, out=None, config: EWCConfig = EWCConfig()) -> dict:
    """Train on Task A, then on Task B with plain SGD and with EWC.

    Each task is scored with the arg-max restricted to its own labels, so the
    numbers measure what the network still knows about a task rather than
    which task head happens to dominate.
    """
    out = _out(out)
    t0 = time.time()
    labels = list(config.task_a) + list(config.task_b)
    ia = list(range(len(config.task_a)))
    ib = list(range(len(config.task_a), len(labels)))

    def data(kinds, n, tag):
        ds = make_dataset(DatasetSpec(tuple(kinds), (config.snr_db,), n, seed * 1000 + tag))
        return ds.channels(), _labels(ds, labels)

    xa, ya = data(config.task_a, config.train_per_kind, 21)
    xb, yb = data(config.task_b, config.train_per_kind, 22)
    xat, yat = data(config.task_a, config.test_per_kind, 23)
    xbt, ybt = data(config.task_b, config.test_per_kind, 24)

    def scores(m):
        return {"task_a": accuracy(m, xat, yat, ia), "task_b": accuracy(m, xbt, ybt, ib)}

    model_a, hist_a = train(default_model(labels, seed=seed, conv_activation=config.conv_activation), xa, ya,
                           config.task_a_train.with_(seed=seed))
    initial = scores(model_a)

    sgd_model, sgd_hist = train(model_a, xb, yb, config.sgd_train.with_(seed=seed + 1),
                                on_epoch=lambda e, m: scores(m))
    fisher = fisher_diagonal(model_a, xa, ya, lam=config.lam, max_samples=config.fisher_samples)
    ewc_model, ewc_hist = train(model_a, xb, yb, config.ewc_train.with_(seed=seed + 1),
                                penalty=fisher.penalty, on_epoch=lambda e, m: scores(m))
    final_sgd, final_ewc = scores(sgd_model), scores(ewc_model)

    series = [("initial", 0, initial["task_a"], initial["task_b"])]
    series += [("sgd", r["epoch"], r["task_a"], r["task_b"]) for r in sgd_hist.rows]
    series += [("ewc", r["epoch"], r["task_a"], r["task_b"]) for r in ewc_hist.rows]
    drop_sgd = initial["task_a"] - final_sgd["task_a"]
    drop_ewc = initial["task_a"] - final_ewc["task_a"]
    result = {
        "initial": initial, "sgd": final_sgd, "ewc": final_ewc, "lambda": config.lam,
        "runtime_s": time.time() - t0, "series": series,
        "checks": [check("sgd_task_a_drop", drop_sgd, ">=", 0.25),
                   check("ewc_task_a_drop", drop_ewc, "<=", 0.10),
                   check("ewc_task_b_accuracy", final_ewc["task_b"], ">=", 0.80)],
    }
    if out is not None:
        _write_rows(out / "ewc_timeseries.csv", ["strategy", "epoch", "task_a_acc", "task_b_acc"], series)
    return result


# --- unknown signals -------------------------------------------------------------------

@dataclass(frozen=True)
class OutlierConfig:
    inliers: tuple = INLIER_KINDS
    outliers: tuple = OUTLIER_KINDS
    snr_db: float = 18.0
    train_per_kind: int = 500
    test_per_kind: int = 200
    train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=40, patience=5)
    projection_dim: int = 16


def outlier_eval(seed: int = 0, out=None, config: OutlierConfig = OutlierConfig()) -> dict:
    """MCD contamination sweep and two-cluster k-means on classifier features.

    The feature extractor is a modulation classifier trained on the inlier
    kinds only; outlier kinds are never seen before testing.
    """
    out = _out(out)
    t0 = time.time()
    inl = list(config.inliers)

    def data(kinds, n, tag):
        ds = make_dataset(DatasetSpec(tuple(kinds), (config.snr_db,), n, seed * 1000 + tag))
        return ds

    train_ds = data(config.inliers, config.train_per_kind, 31)
    test_in = data(config.inliers, config.test_per_kind, 32)
    test_out = data(config.outliers, config.test_per_kind, 33)
    model, _ = train(default_model(inl, seed=seed), train_ds.channels(), _labels(train_ds, inl),
                     config.train.with_(seed=seed))
    f_train, f_in, f_out = (extract_features(model, d.channels()) for d in (train_ds, test_in, test_out))
    f_train, f_in, f_out = reduce_features(f_train, f_in, f_out, dim=config.projection_dim, seed=seed)

    mcd = mcd_fit(f_train, seed=seed)
    sweep = sweep_contamination(f_train, f_in, f_out, model=mcd)
    a_in, a_out = sweep.at(sweep.selected)

    km = kmeans_fit(np.vstack([f_in, f_out]), k=2, seed=seed)
    km = kmeans_label_outlier_cluster(km, f_train)
    km_in = float(np.mean(km.predict(f_in) == INLIER))
    km_out = float(np.mean(km.predict(f_out) == OUTLIER))
    km_overall = (km_in * len(f_in) + km_out * len(f_out)) / (len(f_in) + len(f_out))

    result = {
        "selected_contamination": sweep.selected, "mcd_inlier_acc": a_in, "mcd_outlier_acc": a_out,
        "mcd_min_acc": min(a_in, a_out), "kmeans_inlier_acc": km_in, "kmeans_outlier_acc": km_out,
        "kmeans_overall_acc": km_overall, "feature_dim": f_train.shape[1], "sweep": sweep,
        "runtime_s": time.time() - t0,
        "checks": [check("mcd_min_accuracy", min(a_in, a_out), ">=", 0.75),
                   check("kmeans_inlier_accuracy", km_in, ">=", 0.95),
                   check("kmeans_overall_accuracy", km_overall, ">=", 0.85)],
    }
    if out is not None:
        sweep.to_csv(out / "contamination_sweep.csv")
        _write_rows(out / "kmeans.csv", ["inlier_acc", "outlier_acc", "overall_acc"], [(km_in, km_out, km_overall)])
    return result


# --- replay detection -----------------------------------------------------------------

@dataclass(frozen=True)
class ReplayConfig:
    kind: str = "QAM64"
    snr_db: float = 18.0
    frames: int = 1000
    angles: int = 17
    preamble: int = 8
    train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=200, patience=8)


def replay_dataset(seed: int, config: ReplayConfig) -> tuple[np.ndarray, np.ndarray]:
    """``frames`` fresh frames per rotation angle k*pi/16, k = 0 .. angles-1.

    Frames carry the fixed preamble so the absolute phase is observable;
    class 0 is the unrotated signal.
    """
    xs = []
    for k in range(config.angles):
        rng = substream(seed, "replay", config.kind, k)
        base = np.array([synth_frame(config.kind, config.snr_db, rng, preamble=config.preamble).samples
                         for _ in range(config.frames)])
        xs.append(base * np.exp(1j * k * np.pi / 16))
    return np.concatenate(xs), np.repeat(np.arange(config.angles), config.frames)


def replay_eval(seed: int = 0, out=None, config: ReplayConfig = ReplayConfig()) -> dict:
    out = _out(out)
    t0 = time.time()
    x, y = replay_dataset(seed, config)
    labels = [f"rot{k}" for k in range(config.angles)]
    rng = substream(seed, "replay", "split")
    perm = rng.permutation(len(x))
    cut = int(round(0.8 * len(x)))
    tr, te = perm[:cut], perm[cut:]
    model, hist = train(default_model(labels, seed=seed), x[tr], y[tr], config.train.with_(seed=seed))
    acc = accuracy(model, x[te], y[te])
    counts, norm = model_confusion(model, x[te], y[te])
    result = {"accuracy": acc, "dataset_size": len(x), "epochs": len(hist.rows),
              "best_epoch": hist.best_epoch, "runtime_s": time.time() - t0,
              "checks": [check("replay_accuracy", acc, ">=", 0.90)]}
    if out is not None:
        hist.to_csv(out / "replay_history.csv")
        _write_rows(out / "replay_confusion.csv", ["true"] + labels,
                    [[labels[i]] + list(r) for i, r in enumerate(norm)])
    return result


# --- superimposed signals -------------------------------------------------------------

PAIRS = {
    "innet+jammer": (SignalClass.IN_NETWORK, SignalClass.JAMMER),
    "jammer+outnet": (SignalClass.JAMMER, SignalClass.OUT_NETWORK),
}


@dataclass(frozen=True)
class SuperposedConfig:
    snr_grid: tuple = (10.0,)
    trials: int = 500
    classifier_snrs: tuple = (10.0, 18.0)
    classifier_per_kind: int = 500
    train: TrainConfig = TrainConfig(learning_rate=DESK_LR, max_epochs=60, patience=8)


def mixture_trial(first_kind: str, second_kind: str, snr_db: float, rng: np.random.Generator):
    """Two sources, random orthogonal mixing, independent noise per observation."""
    a = synth_clean(first_kind, rng)
    b = synth_clean(second_kind, rng)
    mixing = random_orthogonal(rng)
    o1, o2 = superimpose(a, b, mixing)
    o1, o2 = apply_awgn(o1, snr_db, rng), apply_awgn(o2, snr_db, rng)
    return MixtureObservation(o1, o2, mixing), (a, b)


def ica_recovery(seed: int = 0, trials: int = 500, n: int = 256) -> dict:
    """Known-mixing recovery for PAM4-level and uniform sources (noise free)."""
    rng = substream(seed, "ica", "recovery")
    corr = []
    for _ in range(trials):
        s = np.stack([rng.choice([-3.0, -1.0, 1.0, 3.0], size=n), rng.uniform(-1, 1, size=n)])
        a = rng.standard_normal((2, 2))
        while abs(np.linalg.det(a)) < 0.1:
            a = rng.standard_normal((2, 2))
        xw, _, _ = whiten(a @ s)
        res = fastica(xw, seed=int(rng.integers(1 << 31)))
        corr.append(matched_correlation(res.sources, s))
    corr = np.array(corr)
    return {"mean_corr": float(corr.mean()), "min_corr": float(corr.min()),
            "checks": [check("ica_recovery_min_corr", float(corr.min()), ">=", 0.95)]}


def superimposed_eval(seed: int = 0, out=None, config: SuperposedConfig = SuperposedConfig(),
                      model: Optional[NeuralModel] = None) -> dict:
    out = _out(out)
    t0 = time.time()
    if model is None:
        model, _ = train_classifier(ALL_KINDS, config.classifier_snrs, config.classifier_per_kind,
                                    seed * 1000 + 41, config.train)
    rows, acc = [], {}
    trial_id = 0
    for snr in config.snr_grid:
        for name, (c1, c2) in PAIRS.items():
            rng = substream(seed, "superposed", name, snr)
            k1, k2 = kinds_of_class(c1), kinds_of_class(c2)
            correct = 0
            for _ in range(config.trials):
                obs, _ = mixture_trial(k1[rng.integers(len(k1))], k2[rng.integers(len(k2))], snr, rng)
                _, frames = separate(obs, seed=int(rng.integers(1 << 31)))
                scores = predict_scores(model, np.stack([f.samples for f in frames]))
                pred = tuple(sorted(int(i) for i in np.argmax(scores, axis=1)))
                truth = tuple(sorted((int(c1), int(c2))))
                ok = pred == truth
                correct += ok
                rows.append({"trial_id": trial_id, "snr_db": snr,
                             "true_pair": "+".join(SignalClass(c).label for c in truth),
                             "predicted_pair": "+".join(SignalClass(c).label for c in pred),
                             "correct": int(ok)})
                trial_id += 1
            acc[(name, snr)] = correct / config.trials
    mean_acc = float(np.mean(list(acc.values())))
    by_pair = {name: float(np.mean([v for (n, _), v in acc.items() if n == name])) for name in PAIRS}
    result = {"pair_accuracy": {f"{n}@{s:g}dB": v for (n, s), v in acc.items()},
              "mean_accuracy": mean_acc, "by_pair": by_pair, "runtime_s": time.time() - t0,
              "checks": [check(f"superimposed_{name}_accuracy", v, ">=", 0.75) for name, v in by_pair.items()]}
    if out is not None:
        write_trials_csv(rows, out / "superimposed_trials.csv")
        _write_rows(out / "superimposed_accuracy.csv", ["pair", "snr_db", "accuracy"],
                    [(n, s, v) for (n, s), v in acc.items()])
    return result


# --- network simulation ---------------------------------------------------------------

SIM_SUITE = ("ideal", "table-per-snr", "table-all", "random")


def simulate(seed: int = 0, out=None, cfg=None, classifiers: Sequence[str] = SIM_SUITE,
             model: Optional[NeuralModel] = None, check_conflicts: bool = True,
             compare_jamming: bool = True) -> dict:
    """Distributed scheduling for each classifier plus both TDMA benchmarks.

    With ``compare_jamming`` every classifier is also run with the jammers
    switched off on the same topology and seed.
    """
    from rfdsa.dsa import sim
    from rfdsa.dsa.classifiers import make_classifier
    from rfdsa.dsa.topology import dump_topology_csv, generate_topology

    out = _out(out)
    cfg = cfg or sim.ScenarioConfig()
    t0 = time.time()
    topo = generate_topology(cfg.topology, seed)
    variants = [cfg.options]
    if compare_jamming:
        variants.append(replace(cfg.options, jamming=not cfg.options.jamming))
    rows, runs = [], {}
    for opts in variants:
        for name in classifiers:
            clf = make_classifier(name, model)
            m = sim.run_simulation(topo, cfg.frames, clf, opts, seed, cfg.sinr,
                                   check_conflicts=check_conflicts)
            runs[(name, opts.jamming)] = m
            rows.append(sim.metrics_row("distributed", name, opts, seed, m))
        b1 = sim.benchmark_scheme_1(topo, cfg.frames, opts, seed, cfg.sinr)
        b2, degree = sim.benchmark_scheme_2(topo, cfg.frames, opts, seed, cfg.sinr)
        runs[("benchmark-1", opts.jamming)] = b1
        runs[("benchmark-2", opts.jamming)] = b2
        rows.append(sim.metrics_row("benchmark-1", "none", opts, seed, b1))
        rows.append(sim.metrics_row("benchmark-2", "none", opts, seed, b2))

    jam = cfg.options.jamming
    checks = []
    if ("ideal", jam) in runs:
        ideal = runs[("ideal", jam)]
        checks.append(check("ideal_outnet_success_pct", ideal.outnet_success_pct, ">=", 100.0))
        checks.append(check("distributed_over_benchmark2", ideal.throughput / max(runs[("benchmark-2", jam)].throughput,
                                                                                    1e-12), ">=", 5.0))
        if ("random", jam) in runs:
            checks.append(check("ideal_minus_random", ideal.throughput - runs[("random", jam)].throughput, ">", 0.0))
        for table in ("table-per-snr", "table-all"):
            if (table, jam) in runs:
                t = runs[(table, jam)].throughput
                checks.append(check(f"ideal_minus_{table}", ideal.throughput - t, ">=", 0.0))
                if ("random", jam) in runs:
                    checks.append(check(f"{table}_minus_random", t - runs[("random", jam)].throughput, ">=", 0.0))
        if compare_jamming and jam:
            checks.append(check("nojam_minus_jam", runs[("ideal", False)].throughput - ideal.throughput, ">", 0.0))
    if check_conflicts:
        worst = max(m.max_concurrent_conflicts for k, m in runs.items() if not k[0].startswith("benchmark"))
        checks.append(check("conflicting_pairs", worst, "<=", 0.0))
    checks.append(check("benchmark2_slots_minus_degree", runs[("benchmark-2", jam)].slots_per_superframe - degree,
                        "<=", 1.0))
    result = {"rows": rows, "max_degree": degree, "runtime_s": time.time() - t0,
              "runs": {f"{k[0]}|jam={int(k[1])}": m.throughput for k, m in runs.items()}, "checks": checks}
    if out is not None:
        sim.write_metrics_csv(rows, out / "metrics.csv")
        dump_topology_csv(topo, out / "topology.csv")
    return result


def traffic_check(seed: int = 0, n: int = 1000, p: float = 0.8) -> dict:
    """Estimate a symmetric two-state chain from ``n`` observations."""
    from rfdsa.traffic import FusionInput, MarkovProfile, fuse, transition_prob

    rng = substream(seed, "traffic", "chain")
    prof = MarkovProfile()
    s = int(rng.integers(2))
    prof.observe(s)
    for _ in range(n - 1):
        s = s if rng.random() < p else 1 - s
        prof.observe(s)
    p00, p11 = transition_prob(prof, 0, 0), transition_prob(prof, 1, 1)
    state, _ = fuse(FusionInput(0, 0.8, 1, 0.9, 0.2))
    return {"p00": p00, "p11": p11, "fused_state": state,
            "checks": [check("p00_error", abs(p00 - p), "<=", 0.05), check("p11_error", abs(p11 - p), "<=", 0.05),
                       check("fused_state", state, ">=", 1)]}
