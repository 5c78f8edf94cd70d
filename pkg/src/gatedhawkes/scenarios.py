"""Reference synthetic scenarios.

Four named ground-truth models over a compact 4-type, 2-state taxonomy:
marketable limit buys/sells (always admissible) and price-improving
aggressive limits (impossible at the minimum spread, so gated off in state
"1"). Spectral radii are pinned by construction: each state's integrated
kernel matrix is rank one with identical rows, so its Perron root equals
the row sum exactly.

  poisson      memoryless baseline, every gate open
  subcritical  both regimes stable; used for parameter-recovery experiments
  dual-regime  calibrated to rho("1") = 0.19 and rho("2+") = 2.67: bursts of
               aggressive orders in disequilibrium compress the spread back,
               so local super-criticality stays contained
  sd-leaky     the dual-regime parameters with the gates forced open
               (zero rows replaced by uniform), the unconstrained baseline
               that diverges
"""

from __future__ import annotations

import numpy as np

from .core import (GatedHawkesError, HawkesParams, ModelSpec, Taxonomy,
                   TransitionKernel, Variant)
from .simulate import ImpactTable

SCENARIO_NAMES = ("poisson", "subcritical", "dual-regime", "sd-leaky")

_EVENTS = ["MLB", "MLS", "ALB", "ALS"]
_STATES = ["1", "2+"]

RHO_EQUILIBRIUM = 0.19
RHO_DISEQUILIBRIUM = 2.67


def scenario_taxonomy() -> Taxonomy:
    return Taxonomy.from_codes(_EVENTS, _STATES)


def scenario_impact() -> ImpactTable:
    """Aggressive orders shift the mid by +-0.5 ticks at the minimum spread
    and +-1.0 ticks in disequilibrium; buys up, sells down."""
    signs = np.array([+1.0, -1.0, +1.0, -1.0])
    dm = np.empty((4, 2))
    dm[:, 0] = 0.5 * signs
    dm[:, 1] = 1.0 * signs
    return ImpactTable(delta_m=dm)


def _alpha_from_kernel_matrices(K_by_state: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """alpha such that the integrated kernel in state x is K_by_state[x]."""
    E = beta.shape[0]
    alpha = np.empty_like(beta)
    for x in range(K_by_state.shape[0]):
        alpha[:, x, :] = K_by_state[x] * beta[:, x, :]
    return alpha


def _dual_regime_phi():
    # MLB, MLS escalate the spread from equilibrium; every type in
    # disequilibrium predominantly compresses it back.
    phi = np.zeros((4, 2, 2))
    gate = np.ones((4, 2), dtype=np.int64)
    phi[0, 0] = [0.70, 0.30]   # MLB at 1
    phi[1, 0] = [0.70, 0.30]   # MLS at 1
    phi[0, 1] = [0.60, 0.40]   # MLB at 2+
    phi[1, 1] = [0.60, 0.40]   # MLS at 2+
    phi[2, 0] = [0.00, 0.00]   # ALB impossible at the minimum spread
    phi[3, 0] = [0.00, 0.00]   # ALS impossible at the minimum spread
    gate[2, 0] = 0
    gate[3, 0] = 0
    phi[2, 1] = [0.90, 0.10]   # ALB at 2+
    phi[3, 1] = [0.90, 0.10]   # ALS at 2+
    return phi, gate


def _dual_regime_params() -> HawkesParams:
    """Kernel matrices with pinned Perron roots and built-in price reversion.

    Both K(x) commute with the buy/sell swap (MLB<->MLS, ALB<->ALS), so the
    Perron vector is swap-symmetric and the spectral radius equals that of
    the 2x2 class matrix [[ml->ml, ml->al], [al->ml, al->al]]:

      state "1":  [[0.15, 0.04], [0.04, 0.15]]      -> rho = 0.19 exactly
      state "2+": [[0.20, 2.00], [0.10, 2.589]]     -> rho = 2.66997...

    Within each class the mass leans onto the price-reverting side: a
    buy-side move excites sell-side responses and vice versa. In
    disequilibrium nearly all mass pours into the aggressive types, so a
    burst both oscillates the mid-price (the high-frequency variance excess)
    and compresses the spread, gating itself off.
    """
    beta = np.full((4, 2, 4), 2.5)
    # columns/rows ordered MLB, MLS, ALB, ALS
    K1 = np.array([
        [0.050, 0.100, 0.010, 0.030],
        [0.100, 0.050, 0.030, 0.010],
        [0.010, 0.030, 0.040, 0.110],
        [0.030, 0.010, 0.110, 0.040],
    ])
    K2 = np.array([
        [0.060, 0.140, 0.200, 1.800],
        [0.140, 0.060, 1.800, 0.200],
        [0.025, 0.075, 0.200, 2.389],
        [0.075, 0.025, 2.389, 0.200],
    ])
    nu = np.array([0.12, 0.12, 0.03, 0.03])
    alpha = _alpha_from_kernel_matrices(np.stack([K1, K2]), beta)
    return HawkesParams(nu=nu, alpha=alpha, beta=beta)


def _dual_regime() -> ModelSpec:
    phi, gate = _dual_regime_phi()
    return ModelSpec(taxonomy=scenario_taxonomy(), variant=Variant.EXSD_HAWKES,
                     transition=TransitionKernel(phi=phi, gate=gate),
                     hawkes=_dual_regime_params())


def _sd_leaky() -> ModelSpec:
    """Dual-regime parameters with the physical gates removed."""
    phi, gate = _dual_regime_phi()
    phi = phi.copy()
    phi[gate == 0] = 0.5
    gate = np.ones_like(gate)
    return ModelSpec(taxonomy=scenario_taxonomy(), variant=Variant.SD_HAWKES,
                     transition=TransitionKernel(phi=phi, gate=gate),
                     hawkes=_dual_regime_params())


def _poisson() -> ModelSpec:
    phi = np.zeros((4, 2, 2))
    phi[:, 0] = [0.80, 0.20]
    phi[:, 1] = [0.70, 0.30]
    gate = np.ones((4, 2), dtype=np.int64)
    nu = np.array([0.25, 0.25, 0.10, 0.10])
    beta = np.full((4, 2, 4), 2.5)
    return ModelSpec(taxonomy=scenario_taxonomy(), variant=Variant.POISSON,
                     transition=TransitionKernel(phi=phi, gate=gate),
                     hawkes=HawkesParams(nu=nu, alpha=np.zeros((4, 2, 4)),
                                         beta=beta))


def _subcritical() -> ModelSpec:
    """Sub-critical ground truth built for clean parameter recovery.

    Each event type is driven by two or three strong kernel components with
    well-separated decay rates (slow decays would make the two state-marked
    copies of the same exciter statistically collinear). Components whose
    excitation could never be observed (state-"1"-marked kernels targeting
    the gated-off aggressive types) are identically zero.
    """
    phi = np.zeros((4, 2, 2))
    gate = np.ones((4, 2), dtype=np.int64)
    phi[0, 0] = [0.70, 0.30]
    phi[1, 0] = [0.70, 0.30]
    phi[0, 1] = [0.35, 0.65]
    phi[1, 1] = [0.35, 0.65]
    gate[2, 0] = 0
    gate[3, 0] = 0
    phi[2, 1] = [0.30, 0.70]
    phi[3, 1] = [0.30, 0.70]
    mlb, mls, alb, als = range(4)
    mass = np.zeros((4, 2, 4))
    beta = np.ones((4, 2, 4))

    def comp(exciter, x, target, k, b):
        mass[exciter, x, target] = k
        beta[exciter, x, target] = b

    comp(mlb, 0, mlb, 0.30, 2.5)
    comp(mls, 0, mls, 0.30, 2.5)
    comp(mls, 1, mlb, 0.25, 6.0)
    comp(mlb, 1, mls, 0.25, 6.0)
    comp(alb, 1, mlb, 0.28, 1.6)
    comp(als, 1, mls, 0.28, 1.6)
    comp(mls, 1, alb, 0.55, 3.5)
    comp(mlb, 1, als, 0.55, 3.5)
    comp(als, 1, alb, 0.50, 1.0)
    comp(alb, 1, als, 0.50, 1.0)
    nu = np.array([0.30, 0.30, 0.45, 0.45])
    return ModelSpec(taxonomy=scenario_taxonomy(), variant=Variant.EXSD_HAWKES,
                     transition=TransitionKernel(phi=phi, gate=gate),
                     hawkes=HawkesParams(nu=nu, alpha=mass * beta, beta=beta))


def make_scenario(name: str) -> tuple[ModelSpec, ImpactTable]:
    """Ground-truth model plus impact table for a named scenario."""
    builders = {
        "poisson": _poisson,
        "subcritical": _subcritical,
        "dual-regime": _dual_regime,
        "sd-leaky": _sd_leaky,
    }
    if name not in builders:
        raise GatedHawkesError(
            f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    return builders[name](), scenario_impact()
