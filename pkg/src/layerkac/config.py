"""Run configuration files, manifests, and replay.

Configs are sectioned key=value text (configparser syntax, human-diffable);
manifests are JSON with every derived quantity resolved, so a finished run
can be replayed bit-exactly from its manifest alone.  Environment variables
spelled LAYERKAC_<SECTION>__<KEY> override file values, for CI sweeps.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .mc import MEASUREMENT_CHANNELS, RunSpec
from .model import Lattice, ModelParams, ValidationError

ENV_PREFIX = "LAYERKAC_"
MANIFEST_SCHEMA = "lk-manifest-v1"

_SECTIONS = {
    "model": ("beta", "gamma", "A", "alpha", "a", "epsilon_override"),
    "lattice": ("L", "H", "horizontal_bc", "vertical_bc"),
    "run": ("sweeps", "burn_in", "seed", "replicas", "measure_every",
            "init", "measurements"),
    "output": ("dir",),
}
_REQUIRED = {
    "model": ("beta", "gamma"),
    "lattice": ("L", "H"),
    "run": ("sweeps",),
}


@dataclass(frozen=True)
class ResolvedRun:
    """A fully validated run request with all derived scales frozen."""

    params: ModelParams
    lattice: Lattice
    sweeps: int
    burn_in: int = 0
    seed: int = 0
    replicas: int = 1
    measure_every: int = 1
    init: str = "random"
    measurements: tuple = ("magnetization",)
    out_dir: str = "runs"

    def run_spec(self, replica: int = 0) -> RunSpec:
        return RunSpec(params=self.params, lattice=self.lattice,
                       sweeps=self.sweeps, burn_in=self.burn_in,
                       seed=self.seed, replica=replica,
                       measure_every=self.measure_every,
                       measurements=self.measurements, init=self.init)

    def resolved_dict(self) -> dict:
        p = self.params
        return {
            "model": {"beta": p.beta, "gamma": p.gamma, "A": p.A,
                      "alpha": p.alpha, "a": p.a,
                      "epsilon_override": p.epsilon_override},
            "derived": {"kac_range": p.kac_range, "epsilon": p.epsilon,
                        "zeta": p.zeta, "ell_minus": p.ell_minus,
                        "ell_plus": p.ell_plus},
            "lattice": {"L": self.lattice.L, "H": self.lattice.H,
                        "horizontal_bc": self.lattice.horizontal_bc,
                        "vertical_bc": self.lattice.vertical_bc},
            "run": {"sweeps": self.sweeps, "burn_in": self.burn_in,
                    "seed": self.seed, "replicas": self.replicas,
                    "measure_every": self.measure_every, "init": self.init,
                    "measurements": list(self.measurements)},
            "output": {"dir": self.out_dir},
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _get(section: dict, sec_name: str, key: str, conv, default=None):
    if key not in section:
        if default is not None or key not in _REQUIRED.get(sec_name, ()):
            return default
        raise ValidationError(f"[{sec_name}] {key} is required")
    raw = section[key]
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"[{sec_name}] {key} = {raw!r}: expected {conv.__name__}") from None


def parse_config(path, env: dict | None = None,
                 extra_sections: tuple = ()) -> ResolvedRun:
    """Parse and validate a config file, applying environment overrides.

    Unknown sections or keys are rejected by name; numeric parse failures
    and model-invariant violations name the offending key.  Sections listed
    in extra_sections (e.g. a sweep grid) are tolerated and left to the
    caller to interpret.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str        # [model] holds both A and a; keep case
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None

    data: dict[str, dict] = {}
    for sec in cp.sections():
        if sec in extra_sections:
            continue
        if sec not in _SECTIONS:
            raise ValidationError(
                f"unknown section [{sec}]; expected one of "
                f"{sorted(_SECTIONS)}")
        for key in cp[sec]:
            if key not in _SECTIONS[sec]:
                raise ValidationError(
                    f"unknown key {key!r} in [{sec}]; expected one of "
                    f"{sorted(_SECTIONS[sec])}")
        data[sec] = dict(cp[sec])

    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if "__" not in rest:
            continue
        sec, key = rest.split("__", 1)
        sec = sec.lower()
        if sec in _SECTIONS:
            # env names are case-insensitive per key; A vs a disambiguate by
            # exact match first
            if key in _SECTIONS[sec]:
                data.setdefault(sec, {})[key] = value
            else:
                matches = [k for k in _SECTIONS[sec] if k.lower() == key.lower()]
                if len(matches) == 1:
                    data.setdefault(sec, {})[matches[0]] = value

    for sec, keys in _REQUIRED.items():
        if sec not in data:
            raise ValidationError(f"missing section [{sec}]")
        for key in keys:
            if key not in data[sec]:
                raise ValidationError(f"[{sec}] {key} is required")

    model = data["model"]
    eps_override = model.get("epsilon_override")
    params = ModelParams(
        beta=_get(model, "model", "beta", float),
        gamma=_get(model, "model", "gamma", float),
        A=_get(model, "model", "A", float, 2.0),
        alpha=_get(model, "model", "alpha", float, 0.1),
        a=_get(model, "model", "a", float, 0.01),
        epsilon_override=None if eps_override in (None, "", "none")
        else float(eps_override),
    )
    latsec = data["lattice"]
    lattice = Lattice(
        L=_get(latsec, "lattice", "L", int),
        H=_get(latsec, "lattice", "H", int),
        horizontal_bc=latsec.get("horizontal_bc", "periodic"),
        vertical_bc=latsec.get("vertical_bc", "periodic"),
    )
    lp = params.ell_plus
    if lattice.L % lp != 0:
        lo = (lattice.L // lp) * lp
        hints = [v for v in (lo, lo + lp) if v > 0]
        raise ValidationError(
            f"L={lattice.L} is not a multiple of the coarse block length "
            f"{lp}; nearest valid sizes: {hints}")
    runsec = data.get("run", {})
    meas_raw = runsec.get("measurements", "magnetization")
    measurements = tuple(s.strip() for s in meas_raw.split(",") if s.strip())
    for ch in measurements:
        if ch not in MEASUREMENT_CHANNELS:
            raise ValidationError(
                f"[run] measurements: unknown channel {ch!r}; expected among "
                f"{MEASUREMENT_CHANNELS}")
    init = runsec.get("init", "random")
    if init not in ("random", "plus", "minus"):
        raise ValidationError(f"[run] init = {init!r}: expected random, "
                              "plus, or minus")
    resolved = ResolvedRun(
        params=params, lattice=lattice,
        sweeps=_get(runsec, "run", "sweeps", int),
        burn_in=_get(runsec, "run", "burn_in", int, 0),
        seed=_get(runsec, "run", "seed", int, 0),
        replicas=_get(runsec, "run", "replicas", int, 1),
        measure_every=_get(runsec, "run", "measure_every", int, 1),
        init=init, measurements=measurements,
        out_dir=data.get("output", {}).get("dir", "runs"),
    )
    if resolved.replicas <= 0:
        raise ValidationError("[run] replicas must be > 0")
    resolved.run_spec(0)   # trigger RunSpec validation once, with context
    return resolved


def render_config(resolved: ResolvedRun) -> str:
    """Canonical config text; parse_config(render_config(r)) == r."""
    d = resolved.resolved_dict()
    lines = []
    for sec in ("model", "lattice", "run", "output"):
        lines.append(f"[{sec}]")
        for key, val in d[sec].items():
            if val is None:
                continue
            if key == "measurements":
                val = ", ".join(val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(resolved: ResolvedRun, out_path, outputs=(),
                   status: str = "completed", wallclock_s: float | None = None,
                   extra: dict | None = None) -> dict:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "config_hash": resolved.config_hash,
        "status": status,
        "created_unix": time.time(),
        "wallclock_s": wallclock_s,
        "resolved": resolved.resolved_dict(),
        "outputs": [{"path": str(Path(p).name), "sha256": file_sha256(p),
                     "bytes": Path(p).stat().st_size}
                    for p in outputs if Path(p).is_file()],
    }
    if extra:
        manifest["extra"] = extra
    out_path = Path(out_path)
    out_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValidationError(
            f"{path}: schema {manifest.get('schema')!r}, "
            f"expected {MANIFEST_SCHEMA}")
    return manifest


def resolved_from_manifest(manifest: dict) -> ResolvedRun:
    """Rebuild the run request; refuses manifests whose derived scales no
    longer match what current code derives (version skew guard)."""
    d = manifest["resolved"]
    m, lat, run = d["model"], d["lattice"], d["run"]
    params = ModelParams(beta=m["beta"], gamma=m["gamma"], A=m["A"],
                         alpha=m["alpha"], a=m["a"],
                         epsilon_override=m["epsilon_override"])
    stored = d.get("derived", {})
    current = {"kac_range": params.kac_range, "epsilon": params.epsilon,
               "zeta": params.zeta, "ell_minus": params.ell_minus,
               "ell_plus": params.ell_plus}
    for key, val in current.items():
        if key in stored and stored[key] != val:
            raise ValidationError(
                f"manifest derived {key}={stored[key]} but this version "
                f"derives {val}; refusing silent replay drift")
    return ResolvedRun(
        params=params,
        lattice=Lattice(L=lat["L"], H=lat["H"],
                        horizontal_bc=lat["horizontal_bc"],
                        vertical_bc=lat["vertical_bc"]),
        sweeps=run["sweeps"], burn_in=run["burn_in"], seed=run["seed"],
        replicas=run["replicas"], measure_every=run["measure_every"],
        init=run["init"], measurements=tuple(run["measurements"]),
        out_dir=d.get("output", {}).get("dir", "runs"),
    )
