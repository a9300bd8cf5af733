"""Chemical source term and Jacobian for an isobaric zero-D ideal-gas reactor.

State vector layout is [T, Y_1, ..., Y_K] (temperature first, then mass
fractions in mechanism order). All quantities are SI: K, Pa, kg/mol, mol/m^3,
J/mol, s.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

R_GAS = 8.314462618          # J/(mol K)
P_STANDARD = 1.0e5           # Pa, reference pressure for equilibrium constants
EXP_ARG_MAX = 700.0          # exp() argument clamp, avoids overflow
Y_NEG_TOL = 1.0e-8           # mass fractions in [-Y_NEG_TOL, 0) are treated as 0
TYPICAL_T = 1.0              # typical magnitudes for FD perturbation sizing
TYPICAL_Y = 1.0e-6


class KineticsError(ValueError):
    """Base class for kinetics evaluation errors."""


class ThermoRangeError(KineticsError):
    def __init__(self, species_name, T, t_low, t_high):
        self.species_name = species_name
        self.T = T
        super().__init__(
            f"temperature {T} K outside thermo range [{t_low}, {t_high}] "
            f"of species {species_name!r}"
        )


class InvalidStateError(KineticsError):
    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)


class RateTelemetry:
    """Accumulates evaluation flags across a run (e.g. clamped exponentials)."""

    def __init__(self):
        self.saturated = False

    def mark_saturated(self):
        self.saturated = True


def _clamped_exp(arg, telemetry=None):
    arg = np.asarray(arg, dtype=float)
    clipped = np.clip(arg, -EXP_ARG_MAX, EXP_ARG_MAX)
    if telemetry is not None and np.any(clipped != arg):
        telemetry.mark_saturated()
    return np.exp(clipped)


@dataclass(frozen=True)
class Species:
    """One chemical species with a two-range NASA-7 thermodynamic fit."""

    name: str
    molar_mass: float                # kg/mol
    t_low: float
    t_mid: float
    t_high: float
    coeffs_low: tuple                # 7 coefficients, valid on [t_low, t_mid]
    coeffs_high: tuple               # 7 coefficients, valid on [t_mid, t_high]

    def __post_init__(self):
        if not np.isfinite(self.molar_mass) or self.molar_mass <= 0:
            raise KineticsError(f"species {self.name!r}: molar mass must be > 0")
        if not (self.t_low < self.t_mid < self.t_high):
            raise KineticsError(
                f"species {self.name!r}: thermo ranges must satisfy "
                "T_low < T_mid < T_high"
            )
        if len(self.coeffs_low) != 7 or len(self.coeffs_high) != 7:
            raise KineticsError(f"species {self.name!r}: need 7+7 NASA coefficients")
        cp_lo = _nasa_cp(np.asarray(self.coeffs_low), self.t_mid)
        cp_hi = _nasa_cp(np.asarray(self.coeffs_high), self.t_mid)
        if abs(cp_lo - cp_hi) > 0.01 * max(abs(cp_lo), abs(cp_hi)):
            raise KineticsError(
                f"species {self.name!r}: c_p discontinuity at T_mid exceeds 1%"
            )

    def _coeffs_at(self, T):
        if not (self.t_low <= T <= self.t_high):
            raise ThermoRangeError(self.name, T, self.t_low, self.t_high)
        return np.asarray(self.coeffs_high if T > self.t_mid else self.coeffs_low)

    def cp(self, T):
        """Molar heat capacity at constant pressure, J/(mol K)."""
        return _nasa_cp(self._coeffs_at(T), T)

    def enthalpy(self, T):
        """Molar enthalpy, J/mol."""
        a = self._coeffs_at(T)
        return R_GAS * T * (
            a[0] + a[1] * T / 2 + a[2] * T**2 / 3 + a[3] * T**3 / 4
            + a[4] * T**4 / 5 + a[5] / T
        )

    def entropy(self, T):
        """Molar entropy at the standard pressure, J/(mol K)."""
        a = self._coeffs_at(T)
        return R_GAS * (
            a[0] * np.log(T) + a[1] * T + a[2] * T**2 / 2 + a[3] * T**3 / 3
            + a[4] * T**4 / 4 + a[6]
        )


def _nasa_cp(a, T):
    return R_GAS * (a[0] + a[1] * T + a[2] * T**2 + a[3] * T**3 + a[4] * T**4)


def thermo_props(T, species):
    """(c_p, H) of one species at temperature T; molar units."""
    return species.cp(T), species.enthalpy(T)


@dataclass(frozen=True)
class Reaction:
    """One elementary reaction with integer stoichiometry.

    `reactants` and `products` map species index -> stoichiometric coefficient.
    `arrhenius` is (A, temperature exponent, activation energy J/mol).
    """

    reactants: dict
    products: dict
    arrhenius: tuple
    reversible: bool = False
    explicit_reverse: tuple = None

    def __post_init__(self):
        if not self.reactants and not self.products:
            raise KineticsError("reaction with empty stoichiometry")
        for stoich in (self.reactants, self.products):
            for idx, nu in stoich.items():
                if int(nu) != nu or nu < 0:
                    raise KineticsError(
                        f"stoichiometric coefficient {nu} must be a non-negative integer"
                    )
        A = self.arrhenius[0]
        if not (A > 0):
            raise KineticsError(f"pre-exponential factor must be > 0, got {A}")
        if self.explicit_reverse is not None and not (self.explicit_reverse[0] > 0):
            raise KineticsError("explicit reverse pre-exponential must be > 0")


@dataclass(frozen=True)
class Mechanism:
    """Immutable set of species and reactions plus precomputed index arrays."""

    species: tuple
    reactions: tuple
    # Derived arrays, filled in by __post_init__.
    molar_masses: np.ndarray = field(default=None, compare=False, repr=False)
    nu_forward: np.ndarray = field(default=None, compare=False, repr=False)
    nu_reverse: np.ndarray = field(default=None, compare=False, repr=False)

    MASS_BALANCE_TOL = 1.0e-8  # kg/mol

    def __post_init__(self):
        if len(self.species) < 1:
            raise KineticsError("mechanism needs at least one species")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise KineticsError("duplicate species names")
        K = len(self.species)
        N = len(self.reactions)
        W = np.array([s.molar_mass for s in self.species])
        nu_f = np.zeros((N, K), dtype=int)
        nu_r = np.zeros((N, K), dtype=int)
        for j, rxn in enumerate(self.reactions):
            for idx, nu in rxn.reactants.items():
                if not 0 <= idx < K:
                    raise KineticsError(f"reaction {j}: species index {idx} out of range")
                nu_f[j, idx] = nu
            for idx, nu in rxn.products.items():
                if not 0 <= idx < K:
                    raise KineticsError(f"reaction {j}: species index {idx} out of range")
                nu_r[j, idx] = nu
            imbalance = abs(float((nu_r[j] - nu_f[j]) @ W))
            if imbalance > self.MASS_BALANCE_TOL:
                raise KineticsError(
                    f"reaction {j} violates mass balance by {imbalance:.3e} kg/mol"
                )
        object.__setattr__(self, "molar_masses", W)
        object.__setattr__(self, "nu_forward", nu_f)
        object.__setattr__(self, "nu_reverse", nu_r)

    @property
    def n_species(self):
        return len(self.species)

    @property
    def n_reactions(self):
        return len(self.reactions)

    def species_index(self, name):
        for i, s in enumerate(self.species):
            if s.name == name:
                return i
        raise KeyError(name)


@dataclass
class ThermoState:
    """Reactor state: temperature, mass fractions and the fixed pressure."""

    T: float
    Y: np.ndarray
    p: float

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)

    def validate(self, check_sum=False):
        if not (self.T > 0) or not np.isfinite(self.T):
            raise InvalidStateError(f"temperature must be positive, got {self.T}", 0)
        if not (self.p > 0) or not np.isfinite(self.p):
            raise InvalidStateError(f"pressure must be positive, got {self.p}")
        if np.any(self.Y < -Y_NEG_TOL) or np.any(self.Y > 1 + Y_NEG_TOL):
            bad = int(np.argmax((self.Y < -Y_NEG_TOL) | (self.Y > 1 + Y_NEG_TOL)))
            raise InvalidStateError(
                f"mass fraction {bad} out of bounds: {self.Y[bad]}", bad + 1
            )
        if check_sum and abs(self.Y.sum() - 1.0) > Y_NEG_TOL:
            raise InvalidStateError(f"mass fractions sum to {self.Y.sum()}, not 1")
        return self

    def to_vector(self):
        return np.concatenate(([self.T], self.Y))

    @classmethod
    def from_vector(cls, y, p):
        y = np.asarray(y, dtype=float)
        return cls(T=float(y[0]), Y=y[1:].copy(), p=p)


def density(state, mech):
    """Mixture mass density from the ideal-gas law, kg/m^3."""
    Y = np.where((state.Y < 0) & (state.Y >= -Y_NEG_TOL), 0.0, state.Y)
    mean_inv = float(np.sum(Y / mech.molar_masses))
    rho = state.p / (R_GAS * state.T * mean_inv)
    if not np.isfinite(rho) or rho <= 0:
        raise InvalidStateError(f"non-physical density {rho}")
    return rho


def concentrations(state, mech):
    """Molar concentrations chi_i = rho Y_i / W_i, mol/m^3."""
    rho = density(state, mech)
    Y = np.where((state.Y < 0) & (state.Y >= -Y_NEG_TOL), 0.0, state.Y)
    return rho * Y / mech.molar_masses


def forward_rate(T, rxn, telemetry=None):
    """Arrhenius forward rate constant A * T^alpha * exp(-E / (R T))."""
    A, alpha, E = rxn.arrhenius
    return float(A * T**alpha * _clamped_exp(-E / (R_GAS * T), telemetry))


def _species_thermo_arrays(T, mech):
    """H_i and S_i for every species at T (molar)."""
    H = np.array([s.enthalpy(T) for s in mech.species])
    S = np.array([s.entropy(T) for s in mech.species])
    return H, S


def equilibrium_constant(T, rxn, mech, telemetry=None):
    """Concentration-based equilibrium constant K_c of one reaction."""
    H, S = _species_thermo_arrays(T, mech)
    dnu = 0.0
    dG = 0.0
    for idx, nu in rxn.products.items():
        dG += nu * (H[idx] - T * S[idx])
        dnu += nu
    for idx, nu in rxn.reactants.items():
        dG -= nu * (H[idx] - T * S[idx])
        dnu -= nu
    Kp = _clamped_exp(-dG / (R_GAS * T), telemetry)
    return float(Kp * (P_STANDARD / (R_GAS * T)) ** dnu)


def reverse_rate(f_j, K_c, rxn, T=None, convention="divide", telemetry=None):
    """Reverse rate constant of one reaction.

    An explicit reverse Arrhenius fit takes precedence; otherwise detailed
    balance b = f / K_c is used (convention="multiply" gives b = f * K_c).
    """
    if not rxn.reversible:
        return 0.0
    if rxn.explicit_reverse is not None:
        A, alpha, E = rxn.explicit_reverse
        return float(A * T**alpha * _clamped_exp(-E / (R_GAS * T), telemetry))
    if convention == "divide":
        return float(f_j / K_c)
    if convention == "multiply":
        return float(f_j * K_c)
    raise ValueError(f"unknown reverse-rate convention {convention!r}")


def reaction_rates(state, mech, convention="divide", telemetry=None):
    """Net molar rate of progress of every reaction, mol/(m^3 s)."""
    chi = concentrations(state, mech)
    T = state.T
    rates = np.empty(mech.n_reactions)
    H = S = None
    for j, rxn in enumerate(mech.reactions):
        f = forward_rate(T, rxn, telemetry)
        if rxn.reversible and rxn.explicit_reverse is None:
            if H is None:
                H, S = _species_thermo_arrays(T, mech)
            dG = 0.0
            dnu = 0.0
            for idx, nu in rxn.products.items():
                dG += nu * (H[idx] - T * S[idx])
                dnu += nu
            for idx, nu in rxn.reactants.items():
                dG -= nu * (H[idx] - T * S[idx])
                dnu -= nu
            Kc = float(
                _clamped_exp(-dG / (R_GAS * T), telemetry)
                * (P_STANDARD / (R_GAS * T)) ** dnu
            )
            b = reverse_rate(f, Kc, rxn, T, convention, telemetry)
        else:
            b = reverse_rate(f, 1.0, rxn, T, convention, telemetry)
        fwd = f * np.prod(chi ** mech.nu_forward[j])
        rev = b * np.prod(chi ** mech.nu_reverse[j]) if b != 0.0 else 0.0
        rates[j] = fwd - rev
    return rates


def production_rates(rates, mech):
    """Net molar production rate of every species, mol/(m^3 s)."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (mech.n_reactions,):
        raise ValueError("rate vector length does not match reaction count")
    return (mech.nu_reverse - mech.nu_forward).T @ rates


def rhs(state, mech, convention="divide", telemetry=None):
    """Time derivative of [T, Y_1..Y_K] for the isobaric reactor."""
    rho = density(state, mech)
    omega = production_rates(reaction_rates(state, mech, convention, telemetry), mech)
    T = state.T
    H = np.array([s.enthalpy(T) for s in mech.species])
    cp_mol = np.array([s.cp(T) for s in mech.species])
    Y = np.where((state.Y < 0) & (state.Y >= -Y_NEG_TOL), 0.0, state.Y)
    cp_mass = float(np.sum(Y * cp_mol / mech.molar_masses))  # J/(kg K)
    dT = -float(omega @ H) / (rho * cp_mass)
    dY = omega * mech.molar_masses / rho
    out = np.concatenate(([dT], dY))
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out)))
        raise InvalidStateError(f"non-finite rhs component {bad}", bad)
    return out


def rhs_vector(y, mech, p, convention="divide", telemetry=None):
    """rhs() on a flat state vector; validates the unpacked state."""
    state = ThermoState.from_vector(y, p)
    state.validate()
    return rhs(state, mech, convention, telemetry)


def fd_jacobian(f, y, typical=None):
    """Dense central-difference Jacobian of f at y.

    Perturbation per component: sqrt(machine eps) * max(|y_j|, typical_j).
    Falls back to a one-sided difference if a perturbed evaluation fails.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if typical is None:
        typical = np.ones(n)
    f0 = None
    sqrt_u = np.sqrt(np.finfo(float).eps)
    J = np.empty((n, n))
    for j in range(n):
        delta = sqrt_u * max(abs(y[j]), typical[j])
        yp = y.copy()
        ym = y.copy()
        yp[j] += delta
        ym[j] -= delta
        try:
            J[:, j] = (f(yp) - f(ym)) / (2 * delta)
        except KineticsError:
            if f0 is None:
                f0 = f(y)
            try:
                J[:, j] = (f(yp) - f0) / delta
            except KineticsError:
                J[:, j] = (f0 - f(ym)) / delta
    if not np.all(np.isfinite(J)):
        raise InvalidStateError("non-finite Jacobian entry")
    return J


def jacobian_fd(state, mech, convention="divide"):
    """Finite-difference Jacobian of rhs() at the given state."""
    state.validate()
    y = state.to_vector()
    typical = np.concatenate(([TYPICAL_T], np.full(mech.n_species, TYPICAL_Y)))
    return fd_jacobian(lambda v: rhs_vector(v, mech, state.p, convention), y, typical)
