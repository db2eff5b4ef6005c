"""Experiment configuration: one structured file describes a reproducible run.

All numeric choices live in the config (no positional CLI math arguments);
the config hash names the output directory, so identical configs land in the
same place with identical bytes.  Presentation fields (output directory,
thread count, figure toggle) are excluded from the hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import yaml

from .errors import ConfigError
from .grid import ProfileSpec
from .operators import OperatorSpec

FWT_MODES = ("thm1_full_simplex", "thm2_k2", "eq3_delta")

_THM2_KINDS = ("identity", "projector_complement", "compact_perturbation")


@dataclass(frozen=True)
class ExperimentConfig:
    operator: OperatorSpec
    grid_n: int = 64
    k: int = 2
    delta: float = 0.1
    eps_ladder: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    probes: Tuple[ProfileSpec, ...] = (
        ProfileSpec(kind="zero"),
        ProfileSpec(kind="constant"),
        ProfileSpec(kind="indicator", a=0.0, b=1.0),
    )
    seed: int = 0
    paths: int = 1000
    output_dir: str = "runs"
    threads: int = 1
    figures: bool = True
    fwt_modes: Optional[Tuple[str, ...]] = None

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.grid_n, int) or self.grid_n < 8 or self.grid_n % 8 != 0:
            raise ConfigError("grid_n", f"must be a multiple of 8 and at least 8, got {self.grid_n} "
                                        "(the quadrature lattice and refinement ladder need it)")
        if not 2 <= self.k <= 4:
            raise ConfigError("k", f"must be between 2 and 4, got {self.k}")
        if self.delta < 2.0 / self.grid_n:
            raise ConfigError("delta", f"must be at least 2/grid_n = {2.0 / self.grid_n}, got {self.delta}")
        if (self.k - 1) * self.delta >= 1.0:
            raise ConfigError("delta", f"(k-1)*delta = {(self.k - 1) * self.delta} leaves an empty simplex")
        if len(self.eps_ladder) < 3:
            raise ConfigError("eps_ladder", "needs at least 3 rungs")
        if any(e <= 0 for e in self.eps_ladder):
            raise ConfigError("eps_ladder", "all entries must be positive")
        if any(b > a for a, b in zip(self.eps_ladder, self.eps_ladder[1:])):
            raise ConfigError("eps_ladder", "entries must be nonincreasing")
        if not self.probes:
            raise ConfigError("probes", "need at least one probe")
        for p in self.probes:
            if p.kind == "values" and len(p.values) != self.grid_n:
                raise ConfigError("probes", f"raw-values probe needs {self.grid_n} entries, got {len(p.values)}")
        if self.seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        if self.paths < 1:
            raise ConfigError("paths", "must be positive")
        if self.threads < 1:
            raise ConfigError("threads", "must be positive")
        if self.fwt_modes is not None:
            for m in self.fwt_modes:
                if m not in FWT_MODES:
                    raise ConfigError("fwt_modes", f"unknown mode '{m}'")
            if "thm2_k2" in self.fwt_modes and self.operator.kind not in _THM2_KINDS:
                raise ConfigError("fwt_modes", f"thm2_k2 needs an identity-plus-compact operator, "
                                               f"got kind '{self.operator.kind}'")
        return self

    def resolved_fwt_modes(self) -> Tuple[str, ...]:
        if self.fwt_modes is not None:
            return self.fwt_modes
        modes = ["thm1_full_simplex"]
        if self.operator.kind in _THM2_KINDS:
            modes.append("thm2_k2")
        modes.append("eq3_delta")
        return tuple(modes)

    def to_dict(self) -> dict:
        return {
            "operator": self.operator.to_dict(),
            "grid_n": self.grid_n,
            "k": self.k,
            "delta": self.delta,
            "eps_ladder": list(self.eps_ladder),
            "probes": [p.to_dict() for p in self.probes],
            "seed": self.seed,
            "paths": self.paths,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "figures": self.figures,
            "fwt_modes": list(self.fwt_modes) if self.fwt_modes is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a mapping")
        if "operator" not in d:
            raise ConfigError("operator", "missing")
        known = {
            "operator", "grid_n", "k", "delta", "eps_ladder", "probes",
            "seed", "paths", "output_dir", "threads", "figures", "fwt_modes",
        }
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        try:
            operator = OperatorSpec.from_dict(d["operator"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("operator", str(exc)) from exc
        kwargs = {"operator": operator}
        try:
            if "grid_n" in d:
                kwargs["grid_n"] = int(d["grid_n"])
            if "k" in d:
                kwargs["k"] = int(d["k"])
            if "delta" in d:
                kwargs["delta"] = float(d["delta"])
            if "eps_ladder" in d:
                kwargs["eps_ladder"] = tuple(float(x) for x in d["eps_ladder"])
            if "probes" in d:
                kwargs["probes"] = tuple(ProfileSpec.from_dict(p) for p in d["probes"])
            if "seed" in d:
                kwargs["seed"] = int(d["seed"])
            if "paths" in d:
                kwargs["paths"] = int(d["paths"])
            if "output_dir" in d:
                kwargs["output_dir"] = str(d["output_dir"])
            if "threads" in d:
                kwargs["threads"] = int(d["threads"])
            if "figures" in d:
                kwargs["figures"] = bool(d["figures"])
            if d.get("fwt_modes") is not None:
                kwargs["fwt_modes"] = tuple(str(m) for m in d["fwt_modes"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("<parse>", str(exc)) from exc
        return cls(**kwargs).validate()

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None,
                       output_dir: Optional[str] = None, figures: Optional[bool] = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if threads is not None:
            cfg = replace(cfg, threads=threads)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        if figures is not None:
            cfg = replace(cfg, figures=figures)
        return cfg.validate()

    def hash(self) -> str:
        """Hash of the experiment-defining fields (presentation fields excluded)."""
        d = self.to_dict()
        for key in ("output_dir", "threads", "figures"):
            d.pop(key, None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
