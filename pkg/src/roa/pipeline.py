"""Configured end-to-end runs: quadratic stages, data, training, neural levels.

A run configuration is one JSON document::

    {
      "system": {"name": "vdp", "f": ["-x2", "x1 - (1 - x1^2)*x2"],
                 "domain": [[-2.5, 2.5], [-3.5, 3.5]]},
      "stages": {"local": {}, "reach": {}, "data": {"n_samples": 3000},
                 "train": {"max_epoch": 20}, "neural_verify": {}},
      "seed": 0, "jobs": 1, "output": "out/vdp"
    }

Every default is written back into the report, so a report's ``config``
entry reruns the same computation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import tempfile
import time
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from . import __version__
from .decomp import compositional_quadratic_verifier, decompose
from .learner import MODES, MlpNet, TrainConfig, save_log, train
from .local import compositional_local_stability_verifier, local_stability_verifier
from .neuralverify import neural_verifier
from .prover import DEFAULT_DELTA, NoLevel, ResourceExhausted
from .reach import quadratic_reach_verifier
from .system import DynamicalSystem, build_system
from .volume import estimate_volume, neural_region, quadratic_region
from .zubovdata import Dataset, generate_data

log = logging.getLogger(__name__)

STAGE_ORDER = ("local", "reach", "data", "train", "neural_verify", "compositional", "volume")

EXIT_OK = 0
EXIT_VERIFICATION = 2
EXIT_CONFIG = 3
EXIT_BUDGET = 4


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str = ""):
        super().__init__(f"{path}: {message}" if message else path)
        self.path = path


STAGE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "local": {"tol": 1e-5, "delta": DEFAULT_DELTA, "min_width": None, "budget": None},
    "reach": {"tol": 1e-5, "delta": DEFAULT_DELTA, "min_width": None, "budget": None,
              "skip": False},
    "data": {"n_samples": 3000, "alpha": 0.1},
    "train": {"lr": 1e-3, "layer": 2, "width": 30, "num_colloc_pts": 300_000,
              "max_epoch": 20, "batch_size": 32, "loss_mode": "Zubov", "alpha": None,
              "sandwich": None, "weights": [1.0, 1.0, 1.0]},
    "neural_verify": {"tol": 1e-3, "delta": DEFAULT_DELTA, "min_width": None, "budget": None},
    "compositional": {"blocks": None, "verifiers": ["local", "quadratic"],
                      "tol": 1e-5, "delta": DEFAULT_DELTA, "budget": None},
    "volume": {"n_mc": 100_000, "seed": 0},
}


# ---------------------------------------------------------------------------
# configuration


def _require(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d or d[key] is None:
        raise ConfigError(f"{path}.{key}" if path else key, "missing")
    return d[key]


def _check_domain(dom, path: str, n: Optional[int]):
    if not isinstance(dom, list) or not dom:
        raise ConfigError(path, "expected a list of [lo, hi] pairs")
    for i, iv in enumerate(dom):
        if (not isinstance(iv, (list, tuple)) or len(iv) != 2
                or not all(isinstance(v, (int, float)) for v in iv) or not iv[0] < iv[1]):
            raise ConfigError(f"{path}[{i}]", "expected [lo, hi] with lo < hi")
    if n is not None and len(dom) != n:
        raise ConfigError(path, f"expected {n} intervals")


def resolve_config(raw: dict) -> dict:
    """Validate ``raw`` and fill in every default."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    sys_cfg = _require(raw, "system", "")
    if not isinstance(sys_cfg, dict):
        raise ConfigError("system", "expected an object")
    f = _require(sys_cfg, "f", "system")
    if not isinstance(f, list) or not f or not all(isinstance(t, str) for t in f):
        raise ConfigError("system.f", "expected a non-empty list of expressions")
    n = len(f)
    dom = _require(sys_cfg, "domain", "system")
    _check_domain(dom, "system.domain", n)
    variables = sys_cfg.get("variables")
    if variables is not None and (not isinstance(variables, list) or len(variables) != n):
        raise ConfigError("system.variables", f"expected {n} names")
    system = {
        "name": str(sys_cfg.get("name", "system")),
        "variables": variables,
        "f": list(f),
        "domain": [list(map(float, iv)) for iv in dom],
        "Q": sys_cfg.get("Q"),
        "equilibrium": sys_cfg.get("equilibrium"),
    }
    stages_raw = raw.get("stages", {"local": {}})
    if not isinstance(stages_raw, dict):
        raise ConfigError("stages", "expected an object")
    stages = {}
    for name, params in stages_raw.items():
        if name not in STAGE_DEFAULTS:
            raise ConfigError(f"stages.{name}", "unknown stage")
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise ConfigError(f"stages.{name}", "expected an object")
        for k in params:
            if k not in STAGE_DEFAULTS[name]:
                raise ConfigError(f"stages.{name}.{k}", "unknown parameter")
        merged = {**STAGE_DEFAULTS[name], **params}
        stages[name] = merged
    if "reach" in stages and "local" not in stages:
        raise ConfigError("stages.reach", "needs the local stage")
    if "neural_verify" in stages:
        for dep in ("local", "train"):
            if dep not in stages:
                raise ConfigError("stages.neural_verify", f"needs the {dep} stage")
    if "train" in stages:
        mode = stages["train"]["loss_mode"]
        if mode not in MODES:
            raise ConfigError("stages.train.loss_mode", f"expected one of {list(MODES)}")
        if mode == "Data" and "data" not in stages:
            raise ConfigError("stages.train", "loss mode 'Data' needs the data stage")
        if stages["train"]["alpha"] is None:
            stages["train"]["alpha"] = stages.get("data", STAGE_DEFAULTS["data"])["alpha"]
    if "compositional" in stages:
        blocks = stages["compositional"]["blocks"]
        if not blocks:
            raise ConfigError("stages.compositional.blocks", "missing")
        flat = sorted(k for b in blocks for k in b)
        if flat != list(range(1, n + 1)):
            raise ConfigError("stages.compositional.blocks", f"must partition 1..{n}")
        for v in stages["compositional"]["verifiers"]:
            if v not in ("local", "quadratic"):
                raise ConfigError("stages.compositional.verifiers", f"unknown verifier {v!r}")
    if "volume" in stages and "local" not in stages:
        raise ConfigError("stages.volume", "needs the local stage")
    ordered = {k: stages[k] for k in STAGE_ORDER if k in stages}
    seed = raw.get("seed", 0)
    jobs = raw.get("jobs", 1)
    if not isinstance(seed, int):
        raise ConfigError("seed", "expected an integer")
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs", "expected a positive integer")
    return {"system": system, "stages": ordered, "seed": seed, "jobs": jobs,
            "output": raw.get("output")}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("<file>", f"{path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return resolve_config(raw)


def make_system(cfg: dict) -> DynamicalSystem:
    s = cfg["system"]
    try:
        return build_system(s["name"], s["f"], s["domain"], variables=s["variables"],
                            equilibrium=s["equilibrium"], Q=s["Q"])
    except (ValueError, SyntaxError, NameError) as exc:
        raise ConfigError("system", str(exc)) from exc


# ---------------------------------------------------------------------------
# persistence


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_call(path, writer) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    writer(tmp)
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(_jsonable(obj), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# running


class Run:
    def __init__(self, cfg: dict, out: Path, resume: bool = False, jobs: Optional[int] = None):
        self.cfg = cfg
        self.out = Path(out)
        self.resume = resume
        self.jobs = jobs if jobs is not None else cfg["jobs"]
        self.sys = make_system(cfg)
        self.stages: Dict[str, dict] = {}
        self.levels: Dict[str, Optional[float]] = {"c1_P": None, "c2_P": None,
                                                    "c1_V": None, "c2_V": None}
        self.net: Optional[MlpNet] = None
        self.data: Optional[Dataset] = None
        self._hashes: Dict[str, str] = {}

    # stage bookkeeping ----------------------------------------------------
    def _stage_hash(self, name: str) -> str:
        upstream = [self._hashes[k] for k in STAGE_ORDER[:STAGE_ORDER.index(name)]
                    if k in self._hashes]
        h = _hash({"system": self.cfg["system"], "stage": self.cfg["stages"][name],
                   "seed": self.cfg["seed"], "upstream": upstream})
        self._hashes[name] = h
        return h

    def _record_path(self, name):
        return self.out / "stages" / f"{name}.json"

    def _cached(self, name: str, h: str, artifacts=()):
        if not self.resume:
            return None
        p = self._record_path(name)
        if not p.exists() or not all((self.out / a).exists() for a in artifacts):
            return None
        rec = json.loads(p.read_text())
        if rec.get("hash") != h:
            return None
        rec["resumed"] = True
        return rec

    def _store(self, name: str, h: str, rec: dict) -> dict:
        rec = _jsonable({**rec, "hash": h})
        atomic_write(self._record_path(name), json.dumps(rec, indent=2))
        return rec

    # stages ---------------------------------------------------------------
    def run_local(self, p):
        r = local_stability_verifier(self.sys, tol=p["tol"], delta=p["delta"],
                                     min_width=p["min_width"], budget=p["budget"],
                                     jobs=self.jobs)
        return {"status": "ok", "c1_P": r.level, **r.to_dict()}

    def run_reach(self, p):
        c1 = self.levels["c1_P"]
        if p["skip"]:
            return {"status": "skipped", "c2_P": c1}
        r = quadratic_reach_verifier(self.sys, c1, tol=p["tol"], delta=p["delta"],
                                     min_width=p["min_width"], budget=p["budget"],
                                     jobs=self.jobs)
        return {"status": "ok", "c2_P": r.level, **r.to_dict()}

    def run_data(self, p):
        t0 = time.perf_counter()
        d = generate_data(self.sys, p["n_samples"], alpha=p["alpha"], seed=self.cfg["seed"],
                          jobs=self.jobs)
        _atomic_call(self.out / "data.csv", d.save)
        self.data = d
        return {"status": "ok", "n_points": len(d), "discarded": d.discarded,
                "alpha": p["alpha"], "wall_time": time.perf_counter() - t0,
                "artifact": "data.csv"}

    def run_train(self, p):
        cfg = TrainConfig(lr=p["lr"], layer=p["layer"], width=p["width"],
                          num_colloc_pts=p["num_colloc_pts"], max_epoch=p["max_epoch"],
                          batch_size=p["batch_size"], loss_mode=p["loss_mode"],
                          alpha=p["alpha"],
                          sandwich=tuple(p["sandwich"]) if p["sandwich"] else None,
                          seed=self.cfg["seed"], weights=tuple(p["weights"]))
        t0 = time.perf_counter()
        net, history = train(self.sys, self.data, cfg)
        _atomic_call(self.out / "net.txt", net.save)
        _atomic_call(self.out / "train_log.csv", lambda path: save_log(history, path))
        self.net = net
        return {"status": "ok", "final_loss": history[-1] if history else None,
                "epochs": len(history), "wall_time": time.perf_counter() - t0,
                "artifact": "net.txt"}

    def run_neural_verify(self, p):
        target = self.levels["c2_P"] if self.levels["c2_P"] is not None else self.levels["c1_P"]
        c1, c2, r = neural_verifier(self.sys, self.net, target, tol=p["tol"], delta=p["delta"],
                                    min_width=p["min_width"], budget=p["budget"],
                                    jobs=self.jobs)
        return {"status": "ok", "target": target, "c1_V": c1, "c2_V": c2, **r.to_dict()}

    def run_compositional(self, p):
        d = decompose(self.sys, p["blocks"])
        out = {"status": "ok", "decomposition": d.describe()}
        for v in p["verifiers"]:
            if v == "local":
                r = compositional_local_stability_verifier(self.sys, d, tol=p["tol"])
            else:
                r = compositional_quadratic_verifier(d, tol=p["tol"], delta=p["delta"],
                                                     budget=p["budget"], jobs=self.jobs)
            out[v] = r.to_dict()
        return out

    def run_volume(self, p):
        out = {"status": "ok", "reference": "simulated DOA"}
        regions = {}
        if self.levels["c2_P"] is not None or self.levels["c1_P"] is not None:
            c = self.levels["c2_P"] if self.levels["c2_P"] is not None else self.levels["c1_P"]
            regions["quadratic"] = quadratic_region(self.sys.P, c)
        if self.levels["c2_V"] is not None and self.net is not None:
            regions["neural"] = neural_region(self.net, self.levels["c2_V"])
        for name, member in regions.items():
            out[name] = estimate_volume(member, self.sys, "doa", p["n_mc"], p["seed"]).to_dict()
            out[name + "_domain"] = estimate_volume(member, self.sys, "domain", p["n_mc"],
                                                    p["seed"]).to_dict()
        return out

    def _restore(self, name: str, rec: dict):
        for k in self.levels:
            if rec.get(k) is not None:
                self.levels[k] = rec[k]
        if name == "data":
            self.data = Dataset.load(self.out / "data.csv", alpha=rec.get("alpha", 0.1),
                                     seed=self.cfg["seed"])
        if name == "train":
            self.net = MlpNet.load(self.out / "net.txt")

    def execute(self) -> dict:
        t0 = time.perf_counter()
        status = "ok"
        failure = None
        exit_code = EXIT_OK
        artifacts = {"data": ("data.csv",), "train": ("net.txt",)}
        for name, params in self.cfg["stages"].items():
            h = self._stage_hash(name)
            rec = self._cached(name, h, artifacts.get(name, ()))
            if rec is not None:
                self._restore(name, rec)
                self.stages[name] = rec
                continue
            log.info("stage %s", name)
            try:
                rec = getattr(self, f"run_{name}")(params)
            except NoLevel as exc:
                rec = {"status": "failed", "error": str(exc),
                       "counterexample": exc.verdict.to_dict() if exc.verdict else None}
                status, failure, exit_code = "verification-failed", name, EXIT_VERIFICATION
            except ResourceExhausted as exc:
                rec = {"status": "budget-exceeded", "error": str(exc)}
                status, failure, exit_code = "budget-exceeded", name, EXIT_BUDGET
            rec = self._store(name, h, rec) if rec.get("status") in ("ok", "skipped") else _jsonable(rec)
            self.stages[name] = rec
            for k in self.levels:
                if rec.get(k) is not None:
                    self.levels[k] = rec[k]
            if failure is not None:
                break
        nesting = self.check_nesting()
        report = {
            "status": status,
            "failed_stage": failure,
            "exit_code": exit_code,
            "levels": self.levels,
            "globally_stable": bool(self.stages.get("local", {}).get("globally_stable", False)),
            "nesting": nesting,
            "stages": self.stages,
            "config": self.cfg,
            "environment": {"version": __version__, "jobs": self.jobs,
                            "python": platform.python_version(), "numpy": np.__version__},
            "wall_time": time.perf_counter() - t0,
        }
        report = _jsonable(report)
        atomic_write(self.out / "report.json", json.dumps(report, indent=2))
        return report

    def check_nesting(self, n: int = 100_000) -> dict:
        """Sampled check of P1 in P2, V1 in P2 and V1 in V2."""
        L = self.levels
        out = {"checked": False}
        if L["c1_P"] is None:
            return out
        X = self.sys.domain.sample(n, np.random.default_rng(12345))
        Vp = np.einsum("ij,jk,ik->i", X, self.sys.P, X)
        c2P = L["c2_P"] if L["c2_P"] is not None else L["c1_P"]
        ok = {"levels_ordered": bool(c2P >= L["c1_P"]),
              "P1_in_P2": bool(np.all(Vp[Vp <= L["c1_P"]] <= c2P))}
        if L["c1_V"] is not None and self.net is not None:
            W = self.net.forward(X)
            v1 = W <= L["c1_V"]
            ok["V1_in_P2"] = bool(np.all(Vp[v1] <= c2P))
            ok["V1_in_V2"] = bool(L["c2_V"] >= L["c1_V"] and np.all(W[v1] <= L["c2_V"]))
        out = {"checked": True, "holds": all(ok.values()), **ok}
        return out


PROVER_KEYS = ("delta", "min_width", "budget")


def apply_prover_overrides(cfg: dict, **overrides) -> dict:
    """Set prover parameters on every stage that takes them; ``None`` keeps the config."""
    for key, value in overrides.items():
        if key not in PROVER_KEYS:
            raise ConfigError(key, "not a prover parameter")
        if value is None:
            continue
        if not value > 0:
            raise ConfigError(f"--{key.replace('_', '-')}", "must be positive")
        for params in cfg["stages"].values():
            if key in params:
                params[key] = value
    return cfg


def run(config_path, out: Optional[str] = None, resume: bool = False,
        jobs: Optional[int] = None, **overrides) -> dict:
    cfg = apply_prover_overrides(load_config(config_path), **overrides)
    out_dir = out or cfg.get("output") or os.path.join(
        os.path.dirname(os.path.abspath(config_path)), "out", cfg["system"]["name"])
    return Run(cfg, Path(out_dir), resume=resume, jobs=jobs).execute()
