"""End-to-end experiment harness.

Runs the two-stage protocol: load data, corrupt the training labels with a
known transition matrix, optionally train a first network with the plain
loss to estimate that matrix from its softmax scores, train with the
selected corrected loss, and evaluate on the untouched clean test labels.

Reports split into a deterministic part (report.json, CSVs, figures; byte
identical for identical config and seed) and timings.json, which holds the
per-stage wall clock and is the one intentionally non-reproducible output.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import LabeledDataset, load_csv_dataset, load_idx, synthetic_gaussians
from .estimator import EstimatedT, EstimatorConfig, estimate_transition_matrix, collect_scores
from .linalg import SingularMatrixError
from .losses import CorrectedLoss
from .network import init_network, save_checkpoint
from .noise import NoiseMatrix, NoiseSpec, PairFlip, build_noise_matrix
from .optim import AdaGrad, SgdMomentum
from .training import EpochStats, TrainConfig, accuracy, train

T_SOURCES = ("ground_truth", "estimated", "file")

# Offset applied to the experiment seed when sampling the synthetic test
# split, so train and test draws never share a generator stream.
_TEST_SEED_OFFSET = 0x7E57


class StageError(RuntimeError):
    """A failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause):
        self.stage = stage
        super().__init__(f"[{stage}] {cause}")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    # synthetic
    classes: int = 3
    per_class: int = 1000
    dim: int | None = None
    separation: float = 3.0
    test_per_class: int = 500
    # idx
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    subset: int | None = None
    # csv
    train_csv: str | None = None
    test_csv: str | None = None
    class_count: int | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "idx", "csv"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        required = {
            "idx": ("train_images", "train_labels", "test_images", "test_labels"),
            "csv": ("train_csv", "test_csv"),
        }.get(self.kind, ())
        for name in required:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"dataset kind {self.kind!r} requires {name}")
            if not Path(value).exists():
                raise ValueError(f"{name} does not exist: {value}")


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (32,)
    dropout: float = 0.0
    activation: str = "relu"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adagrad"
    learning_rate: float = 0.01
    delta: float = 1e-6
    momentum: float = 0.9
    weight_decay: float = 0.0

    def build(self):
        if self.kind == "adagrad":
            return AdaGrad(self.learning_rate, self.delta)
        if self.kind == "sgd_momentum":
            return SgdMomentum(self.learning_rate, self.momentum, self.weight_decay)
        raise ValueError(f"unknown optimizer kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec("identity"))
    loss: str = "plain"
    t_source: str = "ground_truth"
    t_file: str | None = None
    identity_mix: float = 0.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    warm_start: bool = False
    seed: int = 0
    out_dir: str = "out"
    figures: bool = True

    def __post_init__(self):
        if self.loss not in ("plain", "backward", "forward"):
            raise ValueError(f"unknown loss mode {self.loss!r}")
        if self.t_source not in T_SOURCES:
            raise ValueError(f"unknown t_source {self.t_source!r}")
        if self.t_source == "file":
            if not self.t_file:
                raise ValueError("t_source 'file' requires t_file")
            if not Path(self.t_file).exists():
                raise ValueError(f"t_file does not exist: {self.t_file}")


def _noise_spec_from_dict(d: dict) -> NoiseSpec:
    pairs = tuple(
        PairFlip(int(p[0]), int(p[1]), float(p[2]) if len(p) > 2 else None)
        for p in d.get("pairs", ())
    )
    return NoiseSpec(d.get("kind", "identity"), float(d.get("level", 0.0)), pairs)


def _noise_spec_to_dict(spec: NoiseSpec) -> dict:
    pairs = [
        [p.source, p.target] if p.level is None else [p.source, p.target, p.level]
        for p in spec.pairs
    ]
    return {"kind": spec.kind, "level": spec.level, "pairs": pairs}


_T_SOURCE_ALIASES = {"truth": "ground_truth", "estimate": "estimated"}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a validated config from a plain JSON-style dict."""
    doc = dict(doc)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def sub(key, cls, **convert):
        raw = dict(doc.get(key, {}))
        for name, fn in convert.items():
            if name in raw:
                raw[name] = fn(raw[name])
        return cls(**raw)

    seed = int(doc.get("seed", 0))
    train_cfg = sub("train", TrainConfig) if "train" in doc else TrainConfig(epochs=10)
    t_source = doc.get("t_source", "ground_truth")
    t_source = _T_SOURCE_ALIASES.get(t_source, t_source)
    return ExperimentConfig(
        dataset=sub("dataset", DatasetConfig),
        noise=_noise_spec_from_dict(doc.get("noise", {})),
        loss=doc.get("loss", "plain"),
        t_source=t_source,
        t_file=doc.get("t_file"),
        identity_mix=float(doc.get("identity_mix", 0.0)),
        estimator=sub("estimator", EstimatorConfig),
        network=sub("network", NetworkConfig, hidden=tuple),
        optimizer=sub("optimizer", OptimizerConfig),
        train=dataclasses.replace(train_cfg, seed=seed),
        warm_start=bool(doc.get("warm_start", False)),
        seed=seed,
        out_dir=doc.get("out_dir", "out"),
        figures=bool(doc.get("figures", True)),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(config)
    doc["noise"] = _noise_spec_to_dict(config.noise)
    doc["network"]["hidden"] = list(config.network.hidden)
    return doc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config file and apply flat CLI overrides on top."""
    if path is None:
        doc = {}
    else:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config_from_dict(doc)


@dataclass
class ExperimentReport:
    config: dict
    histories: dict[str, list[EpochStats]]
    test_accuracy: float
    t_ground_truth: NoiseMatrix
    t_used: NoiseMatrix | None
    t_estimated: EstimatedT | None
    t_error_max: float | None
    t_error_mean_abs: float | None
    test_label_checksum: str
    wall_clock: dict[str, float]

    def to_json_dict(self) -> dict:
        """The deterministic report content (wall clock excluded)."""
        t_est = None
        if self.t_estimated is not None:
            t_est = {
                "matrix": self.t_estimated.matrix.matrix.tolist(),
                "anchors": [int(a) for a in self.t_estimated.anchors],
                "anchor_scores": [float(s) for s in self.t_estimated.anchor_scores],
                "condition_estimate": _json_float(self.t_estimated.condition_estimate),
                "warnings": list(self.t_estimated.warnings),
            }
        return {
            "config": self.config,
            "histories": {
                stage: [h.to_dict() for h in history]
                for stage, history in self.histories.items()
            },
            "test_accuracy": self.test_accuracy,
            "test_label_checksum": self.test_label_checksum,
            "t_ground_truth": self.t_ground_truth.matrix.tolist(),
            "t_used": None if self.t_used is None else self.t_used.matrix.tolist(),
            "t_estimated": t_est,
            "t_error": None
            if self.t_error_max is None
            else {"max": self.t_error_max, "mean_abs": self.t_error_mean_abs},
        }


def _json_float(x: float):
    return x if np.isfinite(x) else repr(float(x))


def _labels_checksum(labels: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(labels, dtype="<i8").tobytes()).hexdigest()


class _Stages:
    def __init__(self):
        self.wall_clock: dict[str, float] = {}

    @contextmanager
    def run(self, name: str):
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as err:
            raise StageError(name, err) from err
        finally:
            self.wall_clock[name] = time.perf_counter() - start


def _load_datasets(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    ds = config.dataset
    if ds.kind == "synthetic":
        train_blobs = synthetic_gaussians(
            ds.classes, ds.per_class, ds.dim, ds.separation, seed=config.seed
        )
        test_blobs = synthetic_gaussians(
            ds.classes, ds.test_per_class, ds.dim, ds.separation,
            seed=config.seed + _TEST_SEED_OFFSET,
        )
        return train_blobs.dataset, test_blobs.dataset
    if ds.kind == "idx":
        train_ds = load_idx(ds.train_images, ds.train_labels)
        test_ds = load_idx(ds.test_images, ds.test_labels)
        if ds.subset is not None and ds.subset < train_ds.n:
            order = np.random.default_rng(config.seed).permutation(train_ds.n)
            train_ds = train_ds.subset(order[: ds.subset])
        return train_ds, test_ds
    train_ds = load_csv_dataset(ds.train_csv, ds.class_count)
    test_ds = load_csv_dataset(ds.test_csv, ds.class_count or train_ds.class_count)
    return train_ds, test_ds


def _make_loss(config: ExperimentConfig, t_used: NoiseMatrix | None) -> CorrectedLoss:
    if config.loss == "plain":
        return CorrectedLoss.plain()
    if config.loss == "backward":
        try:
            return CorrectedLoss.backward(t_used, config.identity_mix)
        except SingularMatrixError as err:
            raise StageError(
                "train",
                f"noise matrix is numerically singular (condition {err.condition:.3e}); "
                "set a positive identity_mix (--identity-mix) to regularize the inversion",
            ) from err
    return CorrectedLoss.forward(t_used)


def run_experiment(config: ExperimentConfig, write_outputs: bool = True) -> ExperimentReport:
    """Execute the full pipeline described by `config`.

    Stage order: load, corrupt, (stage1-train, estimate,) train, evaluate,
    report. Any failure is re-raised as a StageError naming the stage.
    """
    stages = _Stages()
    histories: dict[str, list[EpochStats]] = {}

    with stages.run("load"):
        train_ds, test_ds = _load_datasets(config)
    checksum_before = _labels_checksum(test_ds.clean_labels)

    with stages.run("corrupt"):
        t_true = build_noise_matrix(config.noise, train_ds.class_count)
        train_ds = train_ds.corrupted(t_true, seed=config.seed)

    train_cfg = dataclasses.replace(config.train, seed=config.seed)
    optimizer_cfg = config.optimizer
    dims = (train_ds.dim, *config.network.hidden, train_ds.class_count)

    stage1_net = None
    estimated: EstimatedT | None = None
    t_used: NoiseMatrix | None = None
    if config.loss != "plain":
        if config.t_source == "ground_truth":
            t_used = t_true
        elif config.t_source == "file":
            with stages.run("load-t"):
                t_used = NoiseMatrix.from_csv(config.t_file)
        else:
            with stages.run("stage1-train"):
                net0 = init_network(
                    dims, train_cfg.init, config.seed,
                    config.network.dropout, config.network.activation,
                )
                stage1_net, stage1_history = train(
                    net0, train_ds, CorrectedLoss.plain(), optimizer_cfg.build(), train_cfg
                )
                histories["stage1"] = stage1_history
            with stages.run("estimate"):
                scores = collect_scores(stage1_net, train_ds.features)
                estimated = estimate_transition_matrix(scores, config.estimator)
                t_used = estimated.matrix

    with stages.run("train"):
        loss = _make_loss(config, t_used)
        if config.warm_start and stage1_net is not None:
            net = stage1_net
        else:
            net = init_network(
                dims, train_cfg.init, config.seed,
                config.network.dropout, config.network.activation,
            )
        final_net, final_history = train(net, train_ds, loss, optimizer_cfg.build(), train_cfg)
        histories["final"] = final_history

    with stages.run("evaluate"):
        test_accuracy = accuracy(final_net, test_ds.features, test_ds.clean_labels)
        checksum_after = _labels_checksum(test_ds.clean_labels)
        if checksum_after != checksum_before:
            raise ValueError("test labels changed during the run")

    t_error_max = t_error_mean = None
    if estimated is not None:
        err = np.abs(estimated.matrix.matrix - t_true.matrix)
        t_error_max = float(err.max())
        t_error_mean = float(err.mean())

    report = ExperimentReport(
        config=config_to_dict(config),
        histories=histories,
        test_accuracy=test_accuracy,
        t_ground_truth=t_true,
        t_used=t_used,
        t_estimated=estimated,
        t_error_max=t_error_max,
        t_error_mean_abs=t_error_mean,
        test_label_checksum=checksum_after,
        wall_clock=stages.wall_clock,
    )
    if write_outputs:
        with stages.run("report"):
            write_report(report, config.out_dir, figures=config.figures, network=final_net)
    return report


def _write_json(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write_report(
    report: ExperimentReport, out_dir, figures: bool = True, network=None
) -> None:
    """Write report.json, matrices, history CSV, figures, and timings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(report.to_json_dict(), out / "report.json")
    _write_json({"wall_clock": report.wall_clock}, out / "timings.json")

    report.t_ground_truth.to_csv(out / "t_ground_truth.csv")
    if report.t_used is not None:
        report.t_used.to_csv(out / "t_used.csv")
    if report.t_estimated is not None:
        report.t_estimated.save(out / "t_hat.csv", out / "t_hat.json")
    if network is not None:
        save_checkpoint(network, out / "model.json")

    with open(out / "history.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("stage,epoch,train_loss,val_loss,val_accuracy\n")
        for stage, history in report.histories.items():
            for h in history:
                f.write(
                    f"{stage},{h.epoch},{h.train_loss:.17g},"
                    f"{h.val_loss:.17g},{h.val_accuracy:.17g}\n"
                )
    if figures and report.histories:
        from .figures import save_training_curves

        save_training_curves(report.histories, out / "curves.png")


@dataclass
class SweepRow:
    dataset: str
    noise_kind: str
    level: float
    loss_mode: str
    t_source: str
    seeds: int
    acc_mean: float | None
    acc_std: float | None
    note: str = ""


def sweep(
    config: ExperimentConfig,
    noise_levels,
    loss_modes,
    seeds,
    out_dir=None,
    figures: bool | None = None,
) -> list[SweepRow]:
    """Grid over noise levels x loss modes, aggregated over seeds.

    A failing cell is recorded in its row's note column and the sweep
    continues. Writes sweep.csv (and sweep.png) when out_dir is given.
    """
    if not noise_levels or not loss_modes or not seeds:
        raise ValueError("sweep grid must be nonempty")
    rows: list[SweepRow] = []
    for level in noise_levels:
        for mode in loss_modes:
            noise = dataclasses.replace(config.noise, level=float(level))
            accs: list[float] = []
            note = ""
            for seed in seeds:
                cell = dataclasses.replace(
                    config, noise=noise, loss=mode, seed=int(seed),
                    train=dataclasses.replace(config.train, seed=int(seed)),
                )
                try:
                    accs.append(run_experiment(cell, write_outputs=False).test_accuracy)
                except (StageError, ValueError) as err:
                    note = f"seed {seed}: {err}"
                    break
            rows.append(
                SweepRow(
                    dataset=config.dataset.kind,
                    noise_kind=config.noise.kind,
                    level=float(level),
                    loss_mode=mode,
                    t_source="-" if mode == "plain" else config.t_source,
                    seeds=len(seeds),
                    acc_mean=float(np.mean(accs)) if not note else None,
                    acc_std=float(np.std(accs)) if not note else None,
                    note=note,
                )
            )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(rows, out / "sweep.csv")
        render = config.figures if figures is None else figures
        if render:
            from .figures import save_sweep_chart

            save_sweep_chart(rows, out / "sweep.png")
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    def fmt(x):
        return "" if x is None else f"{x:.17g}"

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("dataset,noise_kind,N,loss_mode,T_source,seeds,acc_mean,acc_std,note\n")
        for r in rows:
            note = r.note.replace(",", ";").replace("\n", " ")
            f.write(
                f"{r.dataset},{r.noise_kind},{r.level:.17g},{r.loss_mode},"
                f"{r.t_source},{r.seeds},{fmt(r.acc_mean)},{fmt(r.acc_std)},{note}\n"
            )
