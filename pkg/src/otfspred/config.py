"""Simulation configuration, named profiles and flat key=value config files."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Raised when a configuration violates one of its validity bounds."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated TDD massive MIMO-OTFS link.

    Grid sizes follow the usual OTFS convention: ``M`` delay bins, ``N``
    Doppler bins, so one frame carries ``M * N`` samples at sampling period
    ``1 / (M * delta_f)``.
    """

    M: int = 32               # delay bins per frame
    N: int = 4                # Doppler bins per frame
    N_r: int = 8              # BS antennas
    N_u: int = 2              # single-antenna users
    L: int = 16               # maximum delay spread in taps
    K: int = 3                # significant paths per user
    K_C: int = 1              # paths common to all users
    Q: int = 3                # complex-exponential basis order (odd)
    Q_s: int = 4              # spatial basis order (<= N_r)
    Q_SP: int = 2             # Slepian basis order
    Q_DLP: int = 2            # Legendre fitting order
    Q_sg: int = 5             # smoothing polynomial order
    N_sg: int = 5             # smoothing half-window
    G: int = 16               # non-zero pilots per user per frame
    N_t: int = 5              # uplink frames
    N_f: int = 5              # downlink (predicted) frames
    delta: int = 1            # prediction step per extrapolation round
    v: float = 100.0 / 3.0    # user speed, m/s (default 120 km/h)
    f_c: float = 3e9          # carrier frequency, Hz
    delta_f: float = 30e3     # subcarrier spacing, Hz
    snr_db: tuple = (10.0,)   # operating SNR points
    seed: int = 0
    I_max: int = 4            # data-aided refinement iterations
    I_CG: int = 20            # conjugate-gradient iteration cap
    N_ray: int = 32           # rays per scattering cluster
    zeta: float = 1e-3        # significant-path power threshold
    coarse_noise_db: float = -10.0   # perturbation level of coarse estimates
    aoa_spread_deg: float = 5.0      # angular spread of one cluster
    pdp_decay_db: float = 3.0        # power decay across the delay window; the
                                     # strongest taps of the reference profile
                                     # sit within a few dB of each other
    path_powers: tuple | None = None  # explicit per-path powers (overrides profile)
    pilot_power: float = 1.0
    ber_stop_rel: float = 0.01       # early-stop threshold on relative BER change
    N_sg_traj: int = 2               # trajectory smoothing half-window (-1: use N_sg)
    Q_sg_traj: int = 1               # trajectory smoothing order (-1: use Q_sg)

    @property
    def MN(self) -> int:
        return self.M * self.N

    @property
    def traj_n_sg(self) -> int:
        return self.N_sg if self.N_sg_traj < 0 else self.N_sg_traj

    @property
    def traj_q_sg(self) -> int:
        return self.Q_sg if self.Q_sg_traj < 0 else self.Q_sg_traj

    @property
    def T_s(self) -> float:
        return 1.0 / (self.M * self.delta_f)

    @property
    def f_max(self) -> float:
        return self.f_c * self.v / SPEED_OF_LIGHT

    @property
    def nu(self) -> float:
        """Normalized maximum Doppler shift f_max * T_s."""
        return self.f_max * self.T_s

    def validate(self) -> "SimConfig":
        """Check every structural bound, raising ConfigError naming the first violation."""
        if self.Q % 2 == 0:
            raise ConfigError(f"Q must be odd, got Q={self.Q}")
        q_min = 2 * math.ceil(self.N * self.f_max * self.T_s) + 1
        if self.Q < q_min:
            raise ConfigError(
                f"Q={self.Q} violates Q >= 2*ceil(N*f_max*T_s)+1 = {q_min}")
        if not (self.K_C <= self.K <= self.L):
            raise ConfigError(
                f"need K_C <= K <= L, got K_C={self.K_C}, K={self.K}, L={self.L}")
        if self.N_u * (self.K - self.K_C) + self.K_C > self.L:
            raise ConfigError(
                f"N_u*(K-K_C)+K_C = {self.N_u * (self.K - self.K_C) + self.K_C} "
                f"exceeds L={self.L}")
        if self.Q_s > self.N_r:
            raise ConfigError(f"Q_s={self.Q_s} exceeds N_r={self.N_r}")
        if self.Q_sg >= 2 * self.N_sg + 1:
            raise ConfigError(
                f"Q_sg={self.Q_sg} violates Q_sg < 2*N_sg+1 = {2 * self.N_sg + 1}")
        if 2 * self.N_sg + 1 > self.MN:
            raise ConfigError(
                f"smoothing window 2*N_sg+1 = {2 * self.N_sg + 1} exceeds MN={self.MN}")
        if self.G * (2 * self.Q - 1) > self.MN:
            raise ConfigError(
                f"G*(2Q-1) = {self.G * (2 * self.Q - 1)} exceeds MN={self.MN}")
        if self.MN // max(self.G, 1) < 2 * self.Q - 1:
            raise ConfigError(
                f"pilot stride MN//G = {self.MN // max(self.G, 1)} is below 2Q-1 = "
                f"{2 * self.Q - 1}")
        if self.N_f % self.delta != 0:
            raise ConfigError(f"N_f={self.N_f} not divisible by delta={self.delta}")
        if self.path_powers is not None and len(self.path_powers) != self.K:
            raise ConfigError(
                f"path_powers has {len(self.path_powers)} entries, expected K={self.K}")
        return self

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


def desk_profile(**overrides) -> SimConfig:
    """Small configuration sized so full sweeps run in minutes."""
    return SimConfig().replace(**overrides).validate()


def table3_profile(**overrides) -> SimConfig:
    """Full-scale configuration matching the reference system parameters."""
    cfg = SimConfig(
        M=128, N=8, N_r=64, N_u=2, L=64, K=4, K_C=1,
        Q=3, Q_s=32, Q_SP=5, Q_DLP=5, Q_sg=5, N_sg=5,
        G=32, N_t=5, N_f=5, N_sg_traj=-1, Q_sg_traj=-1,
    )
    return cfg.replace(**overrides).validate()


PROFILES = {"desk": desk_profile, "table3": table3_profile}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_flat_config(text: str) -> dict:
    """Parse a flat ``key = value`` file (TOML-compatible subset).

    Supported values: integers, floats, booleans, quoted strings and flat
    lists of scalars.  Lines starting with ``#`` and blank lines are ignored.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if value.startswith("[") and value.endswith("]"):
            body = value[1:-1].strip()
            items = [s for s in (p.strip() for p in body.split(",")) if s]
            out[key] = tuple(_parse_scalar(i) for i in items)
        else:
            out[key] = _parse_scalar(value)
    return out


def config_from_mapping(mapping: dict, base: SimConfig | None = None) -> SimConfig:
    """Build a SimConfig from parsed keys; unknown keys are left for the caller."""
    base = base if base is not None else SimConfig()
    fields = {}
    for key, value in mapping.items():
        if key in _FIELD_TYPES:
            if key == "snr_db" and not isinstance(value, tuple):
                value = (float(value),)
            if key == "path_powers" and isinstance(value, tuple):
                value = tuple(float(x) for x in value)
            fields[key] = value
    return base.replace(**fields).validate()


def load_config(path: str, base: SimConfig | None = None) -> tuple[SimConfig, dict]:
    """Load a config file; returns (config, extra keys not in SimConfig)."""
    with open(path, "r", encoding="utf-8") as fh:
        mapping = parse_flat_config(fh.read())
    cfg = config_from_mapping(mapping, base)
    extra = {k: v for k, v in mapping.items() if k not in _FIELD_TYPES}
    return cfg, extra


def save_config(cfg: SimConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in dataclasses.fields(SimConfig):
            value = getattr(cfg, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                fh.write(f"{f.name} = [{', '.join(repr(v) for v in value)}]\n")
            elif isinstance(value, str):
                fh.write(f'{f.name} = "{value}"\n')
            else:
                fh.write(f"{f.name} = {value!r}\n")
