"""Run configuration: a small sectioned ``key = value`` grammar.

Sections and keys (energies in units of the coupling strength)::

    [model]          kind = single | dqd
                     single: eps, U, spinless (yes/no)
                     dqd:    eps1, eps2, U, U_C, T_C, N, scheme (yes/no)
    [bath NAME]      delta, W, beta, mu, orbitals (space separated)
    [decomposition]  K, tol, method = pade | prony
    [hierarchy]      L, max_ddos
    [solver]         method = gmres | iterative | direct, tol, max_iter,
                     omega_damp, restart
    [observables]    spectral = "u,v u,v ...", currents, noise (yes/no),
                     noise_a, noise_b
    [grid]           kind = default | uniform, omega_min, omega_max, n_points
    [run]            name, workers, out, note (copied to the manifest)
    [sweep]          section.key = v1, v2, ...   (cartesian product)
    [case NAME]      section.key = value(s)       (one variant per case)

In ``[sweep]`` and ``[case]`` a bath key may use ``bath.*.key`` to address
every bath.  ``#`` and ``;`` start comments.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .bath import LorentzBath
from .errors import ConfigError
from .model import DqdParameters, epsilon_from_scheme
from .solvers import METHODS, SolverConfig

_SCHEMA = {
    "model": {"kind": str, "eps": float, "U": float, "spinless": bool, "eps1": float, "eps2": float,
              "U_C": float, "T_C": float, "N": int, "scheme": bool},
    "bath": {"delta": float, "W": float, "beta": float, "mu": float, "orbitals": "ints"},
    "decomposition": {"K": int, "tol": float, "method": str},
    "hierarchy": {"L": int, "max_ddos": int},
    "solver": {"method": str, "tol": float, "max_iter": int, "omega_damp": float, "restart": int},
    "observables": {"spectral": "pairs", "currents": bool, "noise": bool, "noise_a": float, "noise_b": float},
    "grid": {"kind": str, "omega_min": float, "omega_max": float, "n_points": int},
    "run": {"name": str, "workers": int, "out": str, "note": str},
}
_BOOL = {"yes": True, "true": True, "on": True, "1": True, "no": False, "false": False, "off": False, "0": False}


@dataclass
class RunConfig:
    model_kind: str = "single"
    single: dict = field(default_factory=lambda: {"eps": 0.0, "U": 0.0, "spinless": False})
    dqd: DqdParameters = field(default_factory=DqdParameters)
    baths: list = field(default_factory=list)
    K: int | None = None
    tol: float = 0.02
    decomposition: str = "pade"
    L: int = 3
    max_ddos: int = 2_000_000
    solver: SolverConfig = field(default_factory=SolverConfig)
    spectral: list = field(default_factory=list)
    currents: bool = False
    noise: bool = False
    noise_a: float = 0.5
    noise_b: float = 0.5
    grid: dict = field(default_factory=lambda: {"kind": "default"})
    name: str = "run"
    note: str = ""
    workers: int = 1
    out: str = "out"
    expensive: bool = False
    variants: list = field(default_factory=list)  # (tag, RunConfig) from [sweep]/[case]

    def expand(self):
        """Concrete runs: the sweep/case variants, or the config itself."""
        return self.variants or [("", self)]

    @property
    def n_orbitals(self):
        if self.model_kind == "dqd":
            return 4
        return 1 if self.single["spinless"] else 2

    @property
    def U(self):
        return self.dqd.U if self.model_kind == "dqd" else self.single["U"]

    def validate(self, line=None):
        labels = [b.alpha_label for b in self.baths]
        if not self.baths:
            raise ConfigError("at least one [bath NAME] section is required", line)
        if len(set(labels)) != len(labels):
            raise ConfigError("bath names must be unique", line)
        for b in self.baths:
            bad = [u for u in b.coupled_orbitals if not 0 <= u < self.n_orbitals]
            if bad:
                raise ConfigError(f"bath {b.alpha_label} couples to missing orbitals {bad}", line)
        if self.L < 0:
            raise ConfigError("L must be >= 0", line)
        if (self.currents or self.noise) and self.L < 1:
            raise ConfigError("transport observables need L >= 1", line)
        if self.noise and len(self.baths) != 2:
            raise ConfigError("noise needs exactly two baths", line)
        if self.K is not None and self.K < 1:
            raise ConfigError("K must be >= 1", line)
        if not 0 < self.tol <= 0.1:
            raise ConfigError("decomposition tol must lie in (0, 0.1]", line)
        if self.decomposition not in ("pade", "prony"):
            raise ConfigError("decomposition method must be pade or prony", line)
        for u, v in self.spectral:
            if not (0 <= u < self.n_orbitals and 0 <= v < self.n_orbitals):
                raise ConfigError(f"spectral pair ({u},{v}) outside the orbital range", line)
        if self.grid.get("kind", "default") not in ("default", "uniform"):
            raise ConfigError("grid kind must be default or uniform", line)
        if self.grid.get("kind") == "uniform":
            for k in ("omega_min", "omega_max", "n_points"):
                if k not in self.grid:
                    raise ConfigError(f"uniform grid needs {k}", line)
            if self.grid["omega_max"] <= self.grid["omega_min"] or self.grid["n_points"] < 2:
                raise ConfigError("uniform grid needs omega_max > omega_min and n_points >= 2", line)
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", line)
        return self


def _convert(kind, raw, key, line):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind == "pairs":
            out = []
            for item in raw.split():
                u, v = item.split(",")
                out.append((int(u), int(v)))
            return out
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"bad value {raw!r} for {key}", line) from None


def _lex(text):
    """Yield ``(line_no, section, key, value)``; section headers yield ``key=None``."""
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = re.split(r"\s[#;]|^[#;]", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            section = " ".join(line[1:-1].split())
            yield no, section, None, None
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        if section is None:
            raise ConfigError("key outside any section", no)
        k, _, v = line.partition("=")
        yield no, section, k.strip(), v.strip()


def _section_kind(section, no):
    head = section.split()[0]
    if head in ("bath", "case") and len(section.split()) != 2:
        raise ConfigError(f"[{head}] needs a name, e.g. [{head} L]", no)
    if head not in _SCHEMA and head not in ("sweep", "case"):
        raise ConfigError(f"unknown section [{section}]", no)
    return head


def parse_config(text):
    """Parse and validate into a ``RunConfig``; sweeps and cases land in ``.variants``."""
    values = {}
    lines = {}
    baths = {}
    sweeps = []  # (dotted key, [raw values], line)
    cases = {}
    seen = set()
    for no, section, key, val in _lex(text):
        head = _section_kind(section, no)
        if key is None:
            if section in seen:
                raise ConfigError(f"duplicate section [{section}]", no)
            seen.add(section)
            if head == "bath":
                baths[section.split()[1]] = {"_line": (no, no)}
            if head == "case":
                cases[section.split()[1]] = []
            continue
        if head == "sweep":
            sweeps.append((key, [x.strip() for x in val.split(",")], no))
            continue
        if head == "case":
            cases[section.split()[1]].append((key, [x.strip() for x in val.split(",")], no))
            continue
        schema = _SCHEMA[head]
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{section}]", no)
        conv = _convert(schema[key], val, key, no)
        if head == "bath":
            baths[section.split()[1]][key] = (conv, no)
        else:
            if (head, key) in values:
                raise ConfigError(f"duplicate key {key!r}", no)
            values[(head, key)] = conv
            lines[(head, key)] = no
    base = _build(values, lines, baths)
    variants = []
    if not sweeps and not cases:
        return base
    for case_name, items in (cases.items() if cases else [(None, [])]):
        all_items = sweeps + items
        for combo in itertools.product(*[vals for _, vals, _ in all_items]):
            v2 = dict(values)
            b2 = {n: dict(d) for n, d in baths.items()}
            tag_parts = [case_name] if case_name else []
            for (dotted, _, no), raw in zip(all_items, combo):
                _apply_override(dotted, raw, v2, b2, no)
                parts = dotted.split(".")
                name = parts[-1] if parts[0] != "bath" or parts[1] == "*" else f"{parts[1]}.{parts[2]}"
                tag_parts.append(f"{name}={raw}")
            tag = "_".join(tag_parts) if tag_parts else ""
            variants.append((tag, _build(v2, lines, b2)))
    base.variants = variants
    return base


def _apply_override(dotted, raw, values, baths, no):
    parts = dotted.split(".")
    if parts[0] == "bath":
        if len(parts) != 3:
            raise ConfigError(f"bath overrides look like bath.NAME.key, got {dotted!r}", no)
        _, name, key = parts
        if key not in _SCHEMA["bath"]:
            raise ConfigError(f"unknown bath key {key!r}", no)
        targets = list(baths) if name == "*" else [name]
        for t in targets:
            if t not in baths:
                raise ConfigError(f"override names unknown bath {t!r}", no)
            baths[t][key] = (_convert(_SCHEMA["bath"][key], raw, key, no), no)
        return
    if len(parts) != 2 or parts[0] not in _SCHEMA or parts[1] not in _SCHEMA[parts[0]]:
        raise ConfigError(f"unknown override key {dotted!r}", no)
    values[(parts[0], parts[1])] = _convert(_SCHEMA[parts[0]][parts[1]], raw, dotted, no)


def _build(values, lines, baths):
    get = lambda s, k, d=None: values.get((s, k), d)
    line_of = lambda s, k: lines.get((s, k))
    cfg = RunConfig()
    kind = get("model", "kind", "single")
    if kind not in ("single", "dqd"):
        raise ConfigError("model kind must be single or dqd", line_of("model", "kind"))
    cfg.model_kind = kind
    single_keys = {"eps", "U", "spinless"}
    dqd_keys = {"eps1", "eps2", "U", "U_C", "T_C", "N", "scheme"}
    for (s, k), v in values.items():
        if s == "model" and k != "kind" and k not in (single_keys if kind == "single" else dqd_keys):
            raise ConfigError(f"key {k!r} does not apply to a {kind} model", line_of(s, k))
    if kind == "single":
        cfg.single = {"eps": get("model", "eps", 0.0), "U": get("model", "U", 0.0),
                      "spinless": get("model", "spinless", False)}
        if cfg.single["spinless"] and cfg.single["U"]:
            raise ConfigError("a spinless level has no U", line_of("model", "U"))
    else:
        U, UC, N = get("model", "U", 0.0), get("model", "U_C", 0.0), get("model", "N", 1)
        if get("model", "scheme", False):
            e = epsilon_from_scheme(U, UC, N)
            e1 = e2 = e
        else:
            e1, e2 = get("model", "eps1", 0.0), get("model", "eps2", 0.0)
        cfg.dqd = DqdParameters(e1, e2, U, UC, get("model", "T_C", 0.0), N)
    default_orbs = {0: (0, 1), 1: (2, 3)} if kind == "dqd" else {}
    for i, (name, d) in enumerate(baths.items()):
        for req in ("delta", "W", "beta"):
            if req not in d:
                raise ConfigError(f"bath {name} is missing {req!r}", d["_line"][0])
        for k in ("delta", "W", "beta"):
            val, no = d[k]
            if val <= 0:
                raise ConfigError(f"bath {name}: {k} must be positive", no)
        orbs = d["orbitals"][0] if "orbitals" in d else default_orbs.get(i, tuple(range(cfg.n_orbitals)))
        cfg.baths.append(LorentzBath(d["delta"][0], d["W"][0], d["beta"][0],
                                     d.get("mu", (0.0, None))[0], name, orbs))
    cfg.K = get("decomposition", "K")
    cfg.tol = get("decomposition", "tol", 0.02)
    cfg.decomposition = get("decomposition", "method", "pade")
    cfg.L = get("hierarchy", "L", 3)
    cfg.max_ddos = get("hierarchy", "max_ddos", cfg.max_ddos)
    method = get("solver", "method", "gmres")
    if method not in METHODS:
        raise ConfigError(f"solver method must be one of {METHODS}", line_of("solver", "method"))
    try:
        cfg.solver = SolverConfig(omega_damp=get("solver", "omega_damp"), tol=get("solver", "tol", 1e-8),
                                  max_iter=get("solver", "max_iter", 20000), method=method,
                                  restart=get("solver", "restart", 60))
    except ValueError as e:
        raise ConfigError(str(e), line_of("solver", "tol")) from None
    cfg.spectral = get("observables", "spectral", [])
    cfg.currents = get("observables", "currents", False)
    cfg.noise = get("observables", "noise", False)
    cfg.noise_a = get("observables", "noise_a", 0.5)
    cfg.noise_b = get("observables", "noise_b", 0.5)
    cfg.grid = {k: get("grid", k) for k in ("kind", "omega_min", "omega_max", "n_points") if get("grid", k) is not None}
    cfg.grid.setdefault("kind", "uniform" if "omega_min" in cfg.grid else "default")
    cfg.name = get("run", "name", "run")
    cfg.note = get("run", "note", "")
    cfg.workers = get("run", "workers", 1)
    cfg.out = get("run", "out", "out")
    cfg.expensive = ddo_estimate(cfg) > 200_000
    return cfg.validate()


def ddo_estimate(cfg):
    from .hierarchy import ddo_count

    K = cfg.K if cfg.K is not None else 6
    J = sum(2 * K * len(b.coupled_orbitals) for b in cfg.baths)
    return ddo_count(J, cfg.L)


_DQD_BASE = """\
[model]
kind = dqd
U = 12
U_C = 12
T_C = 0
N = 1
scheme = yes

[bath L]
delta = 1
W = 50
beta = 20
mu = 0

[bath R]
delta = 1
W = 50
beta = 20
mu = 0

[decomposition]
K = 6
method = prony

[hierarchy]
L = 5
max_ddos = 100000000

[observables]
spectral = 0,0
noise = yes
currents = yes

[grid]
kind = uniform
omega_min = -24
omega_max = 24
n_points = 481
"""

PRESETS = {
    "fig2": _DQD_BASE + "\n[run]\nname = fig2\nnote = expect side features of A near +-(U - U_C)\n\n[sweep]\nmodel.U_C = 11, 12, 13\n",
    "fig2-2": _DQD_BASE + """
[run]
name = fig2-2

[case n1]
model.N = 1
model.U_C = 11, 12, 13, 14
bath.*.beta = 0.2, 20

[case n0]
model.N = 0
model.U_C = 11
bath.*.beta = 0.2, 20
""",
    "fig3": _DQD_BASE + "\n[run]\nname = fig3\nnote = expect the zero-frequency peak of A to split into two near +-2 T_C\n\n[sweep]\nmodel.T_C = 0.5, 1\n",
    "fig4": _DQD_BASE + """
[run]
name = fig4

[case bias1]
bath.L.mu = 1
bath.R.mu = -1

[case bias2]
bath.L.mu = 2
bath.R.mu = -2
""",
}
