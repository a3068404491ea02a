"""Shared test constructions: custom attacks and brute-force oracles."""

import numpy as np

from sqkd.attacks import AttackSpec, Gate
from sqkd.engine import (
    SubsystemLayout,
    Unitary,
    phase_gate,
    random_state,
    random_unitary,
    single,
)


def transit_phase_attack(phi):
    """Phase kick on the transit alone; couples to nothing."""
    return AttackSpec(
        name="transit_phase",
        probe_dims=(1,),
        probe_factors=(single("E0", [1], dim=1),),
        default_forward=Gate(phase_gate(phi), ("T",)),
        params={"phi": phi},
    )


def probe_decoupled_attack(seed, dim=2):
    """I ⊗ U on (transit, probe): formally targets the channel, acts only on
    the probe, so it can never be detected and never learns anything."""
    rng = np.random.default_rng(seed)
    uf = Unitary(np.kron(np.eye(2), random_unitary(dim, rng).entries))
    ub = Unitary(np.kron(np.eye(2), random_unitary(dim, rng).entries))
    init = random_state(SubsystemLayout((dim,), ("E0",)), rng)
    return AttackSpec(
        name=f"probe_decoupled_{seed}",
        probe_dims=(dim,),
        probe_factors=(init,),
        default_forward=Gate(uf, ("T", "E0")),
        default_backward=Gate(ub, ("T", "E0")),
        params={"seed": float(seed)},
    )


def oracle_partial_trace(amps, dims, keep_positions):
    """Brute-force reduced matrix straight from the definition."""
    n = len(dims)
    traced = [i for i in range(n) if i not in keep_positions]
    t = np.asarray(amps).reshape(dims)
    keep_dims = [dims[i] for i in keep_positions]
    d_keep = int(np.prod(keep_dims))
    rho = np.zeros((d_keep, d_keep), dtype=complex)
    traced_dims = [dims[i] for i in traced]
    traced_iter = list(np.ndindex(*traced_dims)) if traced else [()]
    for a, idx in enumerate(np.ndindex(*keep_dims)):
        for b, jdx in enumerate(np.ndindex(*keep_dims)):
            acc = 0j
            for kdx in traced_iter:
                fi = [0] * n
                fj = [0] * n
                for p, v in zip(keep_positions, idx):
                    fi[p] = v
                for p, v in zip(keep_positions, jdx):
                    fj[p] = v
                for p, v in zip(traced, kdx):
                    fi[p] = v
                    fj[p] = v
                acc += t[tuple(fi)] * np.conj(t[tuple(fj)])
            rho[a, b] = acc
    return rho
