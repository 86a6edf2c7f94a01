"""Flat key=value experiment configuration and run manifests.

The config format is one ``dotted.key=value`` pair per line, ``#`` for
comments.  It is deliberately trivial to parse and diff; the manifest
written next to the run outputs is the same format plus content hashes of
the inputs, so a run is reproducible from the manifest alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .graphs import CoverageGraph, generate_ba, generate_er, load_edge_list

TASK_KINDS = ("er", "ba", "edge_list")


class ConfigError(ValueError):
    pass


def parse_flat_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).open("r", encoding="utf-8"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(entries: dict[str, str], key: str, default=None, required: bool = False):
    if key in entries and entries[key] != "":
        return entries[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: task, training, seeds, output."""

    task_kind: str = "er"
    n: int = 60
    edge_prob: float = 0.08
    attach_count: int = 3
    edge_list_path: str | None = None
    cardinality: int = 5
    variants: tuple[str, ...] = ("classical", "subo", "subo_f")
    query_budget: int = 10_000
    batch_size: int = 16
    lr_policy: float = 1e-4
    lr_log_z: float = 1e-2
    epsilon: float = 0.1
    mix_buffer_fraction: float = 0.25
    offline_steps: int = 0
    total_steps: int | None = None
    embedding_dim: int = 128
    hidden_dim: int = 128
    optimizer: str = "sgd"
    epsilon_reward: float = 1e-6
    top_k: int = 100
    seeds: tuple[int, ...] = (0,)
    metrics_interval: int = 50
    out_dir: str = "runs"
    source_path: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"task.kind must be one of {TASK_KINDS}, got {self.task_kind!r}")
        if self.task_kind == "edge_list":
            if not self.edge_list_path:
                raise ConfigError("task.path is required for edge_list tasks")
            if not Path(self.edge_list_path).exists():
                raise ConfigError(f"edge list file {self.edge_list_path!r} does not exist")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        entries = parse_flat_file(path)
        if overrides:
            entries.update({k: v for k, v in overrides.items() if v is not None})
        total_steps = _get(entries, "train.total_steps")
        return cls(
            task_kind=_get(entries, "task.kind", required=True),
            n=int(_get(entries, "task.n", 60)),
            edge_prob=float(_get(entries, "task.edge_prob", 0.08)),
            attach_count=int(_get(entries, "task.attach_count", 3)),
            edge_list_path=_get(entries, "task.path"),
            cardinality=int(_get(entries, "task.cardinality", required=True)),
            variants=tuple(_get(entries, "train.variants", "classical,subo,subo_f").split(",")),
            query_budget=int(_get(entries, "train.query_budget", 10_000)),
            batch_size=int(_get(entries, "train.batch_size", 16)),
            lr_policy=float(_get(entries, "train.lr_policy", 1e-4)),
            lr_log_z=float(_get(entries, "train.lr_log_z", 1e-2)),
            epsilon=float(_get(entries, "train.epsilon", 0.1)),
            mix_buffer_fraction=float(_get(entries, "train.mix_buffer_fraction", 0.25)),
            offline_steps=int(_get(entries, "train.offline_steps", 0)),
            total_steps=int(total_steps) if total_steps is not None else None,
            embedding_dim=int(_get(entries, "train.embedding_dim", 128)),
            hidden_dim=int(_get(entries, "train.hidden_dim", 128)),
            optimizer=_get(entries, "train.optimizer", "sgd"),
            epsilon_reward=float(_get(entries, "train.epsilon_reward", 1e-6)),
            top_k=int(_get(entries, "train.top_k", 100)),
            seeds=tuple(int(s) for s in _get(entries, "run.seeds", "0").split(",")),
            metrics_interval=int(_get(entries, "run.metrics_interval", 50)),
            out_dir=_get(entries, "run.out", "runs"),
            source_path=str(path),
        )

    def resolved(self) -> dict[str, str]:
        """The full configuration as flat manifest entries."""
        out = {
            "task.kind": self.task_kind,
            "task.cardinality": str(self.cardinality),
            "train.variants": ",".join(self.variants),
            "train.query_budget": str(self.query_budget),
            "train.batch_size": str(self.batch_size),
            "train.lr_policy": repr(self.lr_policy),
            "train.lr_log_z": repr(self.lr_log_z),
            "train.epsilon": repr(self.epsilon),
            "train.mix_buffer_fraction": repr(self.mix_buffer_fraction),
            "train.offline_steps": str(self.offline_steps),
            "train.total_steps": "" if self.total_steps is None else str(self.total_steps),
            "train.embedding_dim": str(self.embedding_dim),
            "train.hidden_dim": str(self.hidden_dim),
            "train.optimizer": self.optimizer,
            "train.epsilon_reward": repr(self.epsilon_reward),
            "train.top_k": str(self.top_k),
            "run.seeds": ",".join(str(s) for s in self.seeds),
            "run.metrics_interval": str(self.metrics_interval),
            "run.out": self.out_dir,
        }
        if self.task_kind == "er":
            out["task.n"] = str(self.n)
            out["task.edge_prob"] = repr(self.edge_prob)
        elif self.task_kind == "ba":
            out["task.n"] = str(self.n)
            out["task.attach_count"] = str(self.attach_count)
        else:
            out["task.path"] = str(self.edge_list_path)
        return out

    def build_graph(self, seed: int) -> CoverageGraph:
        """The task graph for one run; random tasks draw a fresh graph per
        seed, file tasks always load the same one."""
        if self.task_kind == "er":
            return generate_er(self.n, self.edge_prob, seed)
        if self.task_kind == "ba":
            return generate_ba(self.n, self.attach_count, seed)
        return load_edge_list(self.edge_list_path)


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(config: ExperimentConfig, out_dir: Path, run_files: list[str]) -> Path:
    lines = [f"{k}={v}" for k, v in sorted(config.resolved().items())]
    if config.source_path and Path(config.source_path).exists():
        lines.append(f"input.config_sha256={file_sha256(config.source_path)}")
    if config.task_kind == "edge_list":
        lines.append(f"input.edge_list_sha256={file_sha256(config.edge_list_path)}")
    for name in run_files:
        lines.append(f"output.run={name}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
