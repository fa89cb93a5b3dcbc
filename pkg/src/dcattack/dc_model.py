"""DC power-flow model: PTDF construction and the reduced feasibility polytope.

The lossless DC dispatch problem over a case is flattened into a single
inequality system in the non-slack generator injections p (the slack unit
absorbs the power balance) and the load perturbation delta:

    F(delta) = { p : A p + B delta + c <= 0 }

Flows enter through the PTDF matrix referenced at the slack generator's bus,
which is exactly what makes the slack elimination exact (the slack column of
the PTDF is zero, so slack injections never appear in a flow row).  delta
lives on the perturbable buses only: those with nonzero nominal load.

Row stacking order (load-bearing, relied on by labels and certificates):
flow upper bounds, flow lower bounds, slack-gen upper, other gen uppers,
slack-gen lower, other gen lowers.  Unrated branches contribute no rows.
"""

import numpy as np
from dataclasses import dataclass

from . import lin_solve
from .errors import ModelError, PreconditionError
from .numerics import DEFAULT_POLICY


@dataclass
class PtdfSet:
    phi: np.ndarray          # n_branch x n_bus, zero column at the reference bus
    phi_reduced: np.ndarray  # n_branch x (n_bus - 1), reference column dropped
    ref_bus: int             # dense bus position of the reference
    incidence: np.ndarray    # n_branch x n_bus signed incidence (+1 from, -1 to)


def build_ptdf(case, ref_bus):
    """Power transfer distribution factors with the given reference position.

    Flow orientation is from-bus -> to-bus: row k of phi is the sensitivity of
    that oriented flow to a unit injection at each bus (withdrawn at the
    reference).
    """
    n_b, n_l = case.n_bus, case.n_branch
    if not 0 <= ref_bus < n_b:
        raise PreconditionError(f"ref_bus {ref_bus} out of range")
    pos = case.bus_position()
    E = np.zeros((n_l, n_b))
    b = np.empty(n_l)
    for k, br in enumerate(case.branches):
        E[k, pos[br.f_bus]] = 1.0
        E[k, pos[br.t_bus]] = -1.0
        b[k] = br.b
    keep = np.arange(n_b) != ref_bus
    E_hat = E[:, keep]
    YlE_hat = b[:, None] * E_hat
    L_hat = E_hat.T @ YlE_hat
    try:
        phi_reduced = np.linalg.solve(L_hat, YlE_hat.T).T
    except np.linalg.LinAlgError:
        raise ModelError(
            "reduced susceptance Laplacian is singular (disconnected network "
            "or pathological susceptances)")
    resid = float(np.max(np.abs(L_hat @ phi_reduced.T - YlE_hat.T))) if n_l else 0.0
    if resid > 1e-6 * (1.0 + float(np.max(np.abs(b))) if n_l else 1.0):
        raise ModelError(f"PTDF solve residual {resid:.2e}; network nearly singular")
    phi = np.zeros((n_l, n_b))
    phi[:, keep] = phi_reduced
    return PtdfSet(phi=phi, phi_reduced=phi_reduced, ref_bus=int(ref_bus),
                   incidence=E)


@dataclass
class FeasibilityMatrices:
    """The reduced system A p + B delta + c <= 0 plus its provenance."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    row_labels: tuple
    slack_gen: int
    ref_bus: int
    gen_order: np.ndarray    # reduced column -> original generator index
    load_pos: np.ndarray     # dense bus positions of delta components
    load_bus_ids: tuple
    case: object
    ptdf: PtdfSet

    @property
    def m(self):
        return self.c.size

    @property
    def n_delta(self):
        return self.load_pos.size

    @property
    def n_reduced(self):
        return self.A.shape[1]

    def margins(self, p_hat, delta=None):
        """A p + B delta + c, the reduced-system row margins."""
        p_hat = np.zeros(self.n_reduced) if p_hat is None else np.asarray(p_hat, float)
        out = (self.A @ p_hat if self.A.size else np.zeros(self.m)) + self.c
        if delta is not None:
            out = out + self.B @ np.asarray(delta, float)
        return out

    def rhs(self, delta=None):
        """-(B delta + c): feasibility of F(delta) is  A p <= rhs."""
        if delta is None:
            return -self.c
        return -(self.B @ np.asarray(delta, float) + self.c)

    def full_dispatch(self, p_hat, delta=None):
        """Reinsert the slack generator's balancing injection."""
        p_hat = np.asarray(p_hat, float)
        total = self.case.total_load()
        if delta is not None:
            total += float(np.sum(delta))
        p_full = np.empty(self.case.n_gen)
        p_full[self.gen_order] = p_hat
        p_full[self.slack_gen] = total - float(p_hat.sum())
        return p_full

    def model1_margins(self, p_full, delta=None):
        """Independent margin computation straight from the dispatch model:
        full PTDF flows against ratings plus raw generator bounds, in the same
        row order as `margins`.  Used as the reduction's cross-check."""
        case = self.case
        p_full = np.asarray(p_full, float)
        inj = np.zeros(case.n_bus)
        np.add.at(inj, case.gen_positions(), p_full)
        inj -= case.p_d()
        if delta is not None:
            np.subtract.at(inj, self.load_pos, np.asarray(delta, float))
        flows = self.ptdf.phi @ inj
        rates = np.array([br.rate for br in case.branches if br.rate is not None])
        bounded = [k for k, br in enumerate(case.branches) if br.rate is not None]
        lo, hi = case.gen_bounds()
        s = self.slack_gen
        others = self.gen_order
        return np.concatenate([
            flows[bounded] - rates,
            -flows[bounded] - rates,
            [p_full[s] - hi[s]],
            p_full[others] - hi[others],
            [lo[s] - p_full[s]],
            lo[others] - p_full[others],
        ])

    def to_json_dict(self):
        return {
            "rows": self.m,
            "n_reduced": self.n_reduced,
            "n_delta": self.n_delta,
            "slack_gen": int(self.slack_gen),
            "ref_bus_id": int(self.case.buses[self.ref_bus].id),
            "load_bus_ids": [int(i) for i in self.load_bus_ids],
            "row_labels": list(self.row_labels),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "c": self.c.tolist(),
        }


def build_feasibility(case, slack_gen=0, ptdf=None):
    """Assemble F(delta) for the case with the chosen slack generator."""
    if case.n_gen == 0:
        raise ModelError("case has no generators")
    if not 0 <= slack_gen < case.n_gen:
        raise PreconditionError(f"slack_gen {slack_gen} out of range")
    load_pos = case.load_positions()
    if load_pos.size == 0:
        raise ModelError("case has no nonzero loads to perturb")
    gen_pos = case.gen_positions()
    ref = int(gen_pos[slack_gen])
    if ptdf is None:
        ptdf = build_ptdf(case, ref)
    elif ptdf.ref_bus != ref:
        raise PreconditionError(
            f"ptdf referenced at bus position {ptdf.ref_bus}, but slack "
            f"generator {slack_gen} sits at position {ref}")

    phi = ptdf.phi
    p_d = case.p_d()
    phi_pd = phi @ p_d
    n_g = case.n_gen
    others = np.array([g for g in range(n_g) if g != slack_gen], dtype=int)
    n_red = others.size
    n_delta = load_pos.size

    phi_gen = phi[:, gen_pos[others]] if n_red else np.zeros((case.n_branch, 0))
    phi_load = phi[:, load_pos]
    bounded = [k for k, br in enumerate(case.branches) if br.rate is not None]
    rates = np.array([case.branches[k].rate for k in bounded])
    lo, hi = case.gen_bounds()
    total_load = case.total_load()

    nb = len(bounded)
    m = 2 * nb + 2 * n_g
    A = np.zeros((m, n_red))
    B = np.zeros((m, n_delta))
    c = np.zeros(m)
    labels = []

    fu = slice(0, nb)
    A[fu] = phi_gen[bounded]
    B[fu] = -phi_load[bounded]
    c[fu] = -phi_pd[bounded] - rates
    fl = slice(nb, 2 * nb)
    A[fl] = -phi_gen[bounded]
    B[fl] = phi_load[bounded]
    c[fl] = phi_pd[bounded] - rates
    for tag, sl in (("flow-upper", fu), ("flow-lower", fl)):
        for k in bounded:
            br = case.branches[k]
            labels.append(f"{tag}:br{k}:{br.f_bus}-{br.t_bus}")

    r = 2 * nb
    slack_bus_id = case.generators[slack_gen].bus
    A[r] = -1.0
    B[r] = 1.0
    c[r] = total_load - hi[slack_gen]
    labels.append(f"slack-gen-upper:g{slack_gen}@bus{slack_bus_id}")
    r += 1
    gu = slice(r, r + n_red)
    A[gu] = np.eye(n_red)
    c[gu] = -hi[others]
    for j in others:
        labels.append(f"gen-upper:g{j}@bus{case.generators[j].bus}")
    r += n_red
    A[r] = 1.0
    B[r] = -1.0
    c[r] = lo[slack_gen] - total_load
    labels.append(f"slack-gen-lower:g{slack_gen}@bus{slack_bus_id}")
    r += 1
    gl = slice(r, r + n_red)
    A[gl] = -np.eye(n_red)
    c[gl] = lo[others]
    for j in others:
        labels.append(f"gen-lower:g{j}@bus{case.generators[j].bus}")

    return FeasibilityMatrices(
        A=A, B=B, c=c, row_labels=tuple(labels), slack_gen=int(slack_gen),
        ref_bus=ref, gen_order=others, load_pos=load_pos,
        load_bus_ids=tuple(int(case.buses[i].id) for i in load_pos),
        case=case, ptdf=ptdf)


@dataclass
class DcopfResult:
    feasible: bool
    p_hat: np.ndarray = None
    p_full: np.ndarray = None
    cost: float = None
    ray: np.ndarray = None   # normalized Farkas ray over the rows when infeasible


def solve_dcopf(mats, delta=None, policy=DEFAULT_POLICY):
    """Cost-minimizing dispatch inside F(delta), or a certified-infeasible flag.

    The slack generator's cost is folded into the reduced objective through the
    power-balance substitution, so the reported cost is the true total cost.
    """
    case = mats.case
    costs = case.gen_costs()
    red_cost = costs[mats.gen_order] - costs[mats.slack_gen]
    rhs = mats.rhs(delta)
    res = lin_solve.lp_solve(
        lin_solve.LpProblem(c=red_cost, A_ub=mats.A, b_ub=rhs), policy)
    if res.status == lin_solve.INFEASIBLE:
        ray = lin_solve.normalize_farkas_ray(mats.A, rhs, res.certificate.y_ub,
                                             policy)
        return DcopfResult(feasible=False, ray=ray)
    if res.status != lin_solve.OPTIMAL:
        raise ModelError(
            f"dispatch LP returned {res.status}; generator bounds should make "
            "the polytope bounded")
    p_full = mats.full_dispatch(res.x, delta)
    return DcopfResult(feasible=True, p_hat=res.x, p_full=p_full,
                       cost=float(costs @ p_full))
