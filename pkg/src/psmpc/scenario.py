"""Scenario files: parsing, validation, serialization, hashing.

Scenarios are TOML with explicit units in key names (angles in degrees,
times in seconds); everything is converted to SI + radians at load time.
The resolved configuration can be serialized back to an equivalent TOML
document, and a content hash over the resolved numbers identifies a run.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from psmpc.errors import ScenarioError
from psmpc.lti_model import ContinuousLti
from psmpc.polytope import Polytope, from_box
from psmpc.supervisor import EnergyParams

DEG = math.pi / 180.0


@dataclass
class ControllerSpec:
    id: int
    name: str
    Q: np.ndarray
    R: np.ndarray
    lam: float
    psmpc_member: bool


@dataclass
class DisturbanceSpec:
    kind: str = "none"  # none | gaussian_elevator
    mean: float = 0.0   # rad
    std: float = 0.0    # rad
    seed: int = 0


@dataclass
class ScenarioConfig:
    """Fully resolved scenario in SI units and radians."""

    name: str
    mode: str                      # nominal | robust
    controller_selection: str      # pSMPC | single:<id>
    plant: ContinuousLti
    dt_sim: float
    dt_mpc: float
    t_final: float
    N: int
    x0: np.ndarray
    state_bounds: tuple[np.ndarray, np.ndarray]
    input_bounds: tuple[np.ndarray, np.ndarray]
    controllers: list[ControllerSpec]
    sigma_W_nominal: float
    sigma_W_robust: float
    c_gamma: float
    energy: EnergyParams
    disturbance: DisturbanceSpec
    output_dir: str = ""

    @property
    def X(self) -> Polytope:
        return from_box(*self.state_bounds)

    @property
    def U(self) -> Polytope:
        return from_box(*self.input_bounds)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt_sim))

    def engaged_controllers(self) -> list[ControllerSpec]:
        sel = self.controller_selection
        if sel == "pSMPC":
            members = [c for c in self.controllers if c.psmpc_member]
            if not members:
                raise ScenarioError("pSMPC selection needs at least one member controller")
            return members
        if sel.startswith("single:"):
            cid = int(sel.split(":", 1)[1])
            for c in self.controllers:
                if c.id == cid:
                    return [c]
            raise ScenarioError(f"no controller with id {cid}")
        raise ScenarioError(f"unknown controller selection {sel!r}")

    def sigma_W(self) -> float:
        return self.sigma_W_nominal if self.mode == "nominal" else self.sigma_W_robust


def _require(table, key, where):
    if key not in table:
        raise ScenarioError(f"missing key {key!r} in [{where}]")
    return table[key]


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"cannot parse {path}: {e}")
    return resolve_scenario(raw)


def resolve_scenario(raw: dict) -> ScenarioConfig:
    try:
        time_tab = raw["time"]
        plant_tab = raw["plant"]
        init = raw["initial_state"]
        cons = raw["constraints"]
        sup = raw["supervisor"]
        energy = raw["energy"]
    except KeyError as e:
        raise ScenarioError(f"missing section {e} in scenario")

    dt_sim = float(_require(time_tab, "dt_sim_s", "time"))
    dt_mpc = float(_require(time_tab, "dt_mpc_s", "time"))
    t_final = float(_require(time_tab, "t_final_s", "time"))
    N = int(_require(time_tab, "horizon_steps", "time"))
    if dt_sim <= 0 or dt_mpc <= 0 or t_final <= 0:
        raise ScenarioError("time steps and final time must be positive")
    ratio = dt_mpc / dt_sim
    if abs(ratio - round(ratio)) > 1e-9:
        raise ScenarioError("dt_mpc_s must be an integer multiple of dt_sim_s")

    A = np.array(plant_tab["A"], dtype=float)
    B = np.array(plant_tab["B"], dtype=float)
    plant = ContinuousLti(
        A=A, B=B,
        state_labels=tuple(plant_tab.get("state_labels", ())),
        input_labels=tuple(plant_tab.get("input_labels", ())),
    )
    if plant.n != 4 or plant.m != 2:
        raise ScenarioError("scenario plant must have 4 states (alpha,q,V,theta) and 2 inputs (eta,delta)")

    x0 = np.array([
        float(_require(init, "alpha_deg", "initial_state")) * DEG,
        float(_require(init, "q_degps", "initial_state")) * DEG,
        float(_require(init, "V_mps", "initial_state")),
        float(_require(init, "theta_deg", "initial_state")) * DEG,
    ])

    a_max = float(_require(cons, "alpha_max_deg", "constraints")) * DEG
    q_max = float(_require(cons, "q_max_degps", "constraints")) * DEG
    v_max = float(_require(cons, "V_max_mps", "constraints"))
    th_max = float(_require(cons, "theta_max_deg", "constraints")) * DEG
    eta_max = float(_require(cons, "eta_max_deg", "constraints")) * DEG
    d_min = float(_require(cons, "delta_min_frac", "constraints"))
    d_max = float(_require(cons, "delta_max_frac", "constraints"))
    state_lo = np.array([-a_max, -q_max, -v_max, -th_max])
    state_hi = -state_lo
    input_lo = np.array([-eta_max, d_min])
    input_hi = np.array([eta_max, d_max])

    ctrl_tables = raw.get("controller", [])
    if not ctrl_tables:
        raise ScenarioError("scenario defines no [[controller]] tables")
    controllers = []
    seen = set()
    for tab in ctrl_tables:
        cid = int(_require(tab, "id", "controller"))
        if cid in seen:
            raise ScenarioError(f"duplicate controller id {cid}")
        seen.add(cid)
        Q = np.array(tab["Q"], dtype=float)
        R = np.array(tab["R"], dtype=float)
        if Q.shape != (4, 4) or R.shape != (2, 2):
            raise ScenarioError(f"controller {cid}: Q must be 4x4 and R 2x2")
        controllers.append(ControllerSpec(
            id=cid, name=str(tab.get("name", f"mpc{cid}")),
            Q=Q, R=R, lam=float(tab.get("lambda_robust", 10.0)),
            psmpc_member=bool(tab.get("psmpc_member", True)),
        ))

    dist_tab = raw.get("disturbance", {})
    disturbance = DisturbanceSpec(
        kind=str(dist_tab.get("kind", "none")),
        mean=float(dist_tab.get("mean_deg", 0.0)) * DEG,
        std=float(dist_tab.get("std_deg", 0.0)) * DEG,
        seed=int(dist_tab.get("seed", 0)),
    )
    if disturbance.kind not in ("none", "gaussian_elevator"):
        raise ScenarioError(f"unknown disturbance kind {disturbance.kind!r}")

    ep = EnergyParams(
        mass=float(_require(energy, "mass_kg", "energy")),
        gravity=float(_require(energy, "gravity_mps2", "energy")),
        dt_mpc=dt_mpc,
        v_trim=float(_require(energy, "V_trim_mps", "energy")),
    )

    mode = str(raw.get("mode", "nominal"))
    if mode not in ("nominal", "robust"):
        raise ScenarioError(f"unknown mode {mode!r}")

    return ScenarioConfig(
        name=str(raw.get("name", "scenario")),
        mode=mode,
        controller_selection=str(raw.get("controller_selection", "pSMPC")),
        plant=plant,
        dt_sim=dt_sim, dt_mpc=dt_mpc, t_final=t_final, N=N,
        x0=x0,
        state_bounds=(state_lo, state_hi),
        input_bounds=(input_lo, input_hi),
        controllers=controllers,
        sigma_W_nominal=float(_require(sup, "sigma_W_nominal", "supervisor")),
        sigma_W_robust=float(_require(sup, "sigma_W_robust", "supervisor")),
        c_gamma=float(_require(sup, "c_gamma", "supervisor")),
        energy=ep,
        disturbance=disturbance,
        output_dir=str(raw.get("output_dir", "")),
    )


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    """Back to the raw TOML schema (degrees and unit-labeled keys)."""
    lo, hi = sc.state_bounds
    ilo, ihi = sc.input_bounds
    return {
        "name": sc.name,
        "mode": sc.mode,
        "controller_selection": sc.controller_selection,
        "time": {
            "dt_sim_s": sc.dt_sim,
            "dt_mpc_s": sc.dt_mpc,
            "t_final_s": sc.t_final,
            "horizon_steps": sc.N,
        },
        "plant": {
            "state_labels": list(sc.plant.state_labels),
            "input_labels": list(sc.plant.input_labels),
            "A": sc.plant.A.tolist(),
            "B": sc.plant.B.tolist(),
        },
        "initial_state": {
            "alpha_deg": sc.x0[0] / DEG,
            "q_degps": sc.x0[1] / DEG,
            "V_mps": sc.x0[2],
            "theta_deg": sc.x0[3] / DEG,
        },
        "constraints": {
            "alpha_max_deg": hi[0] / DEG,
            "q_max_degps": hi[1] / DEG,
            "V_max_mps": hi[2],
            "theta_max_deg": hi[3] / DEG,
            "eta_max_deg": ihi[0] / DEG,
            "delta_min_frac": ilo[1],
            "delta_max_frac": ihi[1],
        },
        "supervisor": {
            "sigma_W_nominal": sc.sigma_W_nominal,
            "sigma_W_robust": sc.sigma_W_robust,
            "c_gamma": sc.c_gamma,
        },
        "energy": {
            "mass_kg": sc.energy.mass,
            "gravity_mps2": sc.energy.gravity,
            "V_trim_mps": sc.energy.v_trim,
        },
        "disturbance": {
            "kind": sc.disturbance.kind,
            "mean_deg": sc.disturbance.mean / DEG,
            "std_deg": sc.disturbance.std / DEG,
            "seed": sc.disturbance.seed,
        },
        "controller": [
            {
                "id": c.id,
                "name": c.name,
                "psmpc_member": c.psmpc_member,
                "lambda_robust": c.lam,
                "Q": c.Q.tolist(),
                "R": c.R.tolist(),
            }
            for c in sc.controllers
        ],
    }


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def dumps_toml(doc: dict) -> str:
    """Minimal TOML writer covering the scenario schema."""
    lines = []
    tables = {}
    arrays = {}
    for k, v in doc.items():
        if isinstance(v, dict):
            tables[k] = v
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            arrays[k] = v
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    for name, tab in tables.items():
        lines.append("")
        lines.append(f"[{name}]")
        for k, v in tab.items():
            lines.append(f"{k} = {_toml_value(v)}")
    for name, items in arrays.items():
        for tab in items:
            lines.append("")
            lines.append(f"[[{name}]]")
            for k, v in tab.items():
                lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def save_scenario(sc: ScenarioConfig, path):
    Path(path).write_text(dumps_toml(scenario_to_dict(sc)))


def config_hash(sc: ScenarioConfig) -> str:
    """Content hash over every numeric input affecting results."""
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def shipped_scenario_path(name: str = "aircraft") -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.toml"
