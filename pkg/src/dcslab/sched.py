"""Device selection and upload scheduling under data/skew constraints.

An instance carries devices with upload time t(i), data quantity D(i),
distribution skewness E(i) and expenditure c(i), a channel count, a data
requirement, a skew threshold, and objective weights alpha/beta. A
solution selects devices with enough total data (filtering skewed ones),
assigns each selected device to one upload channel, and minimizes

    objective = alpha * total_expenditure + beta * makespan.

The main solver runs four phases:

1. group devices by upload-time levels (one group per distinct t, each
   containing every low-skew device at most that slow),
2. inside each viable group, gather a cheap covering subset with a
   primal-dual loop -- potentials b_i rise uniformly per unit of residual
   demand, and the device with the cheapest normalized residual cost
   joins the selection,
3. schedule each subset longest-processing-time-first onto the least
   loaded channel,
4. keep the candidate with the lowest combined cost.

Random-prefix and greedy data-per-cost baselines plus an exhaustive
optimal solver (for small instances) are provided for comparison; the
main solver stays within 3x of the exhaustive optimum.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InfeasibleError

_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    upload_time: float  # t(i), seconds
    data_quantity: float  # D(i)
    skewness: float = 0.0  # E(i), earth mover's distance
    expenditure: float = 0.0  # c(i)

    def __post_init__(self):
        if self.upload_time <= 0:
            raise ValueError(f"device {self.id}: upload_time must be > 0")
        if self.data_quantity < 0 or self.skewness < 0 or self.expenditure < 0:
            raise ValueError(f"device {self.id}: D, E, c must be >= 0")


@dataclass(frozen=True)
class TrainInstance:
    devices: tuple[DeviceProfile, ...]
    channels: int
    data_requirement: float
    skew_threshold: float = math.inf
    alpha: float = 0.5
    beta: float = 0.5
    deadline: float = math.inf  # stored for completeness; never enforced

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.data_requirement < 0:
            raise ValueError("data_requirement must be >= 0")
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha and beta must lie in [0, 1]")
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("device ids must be unique")

    def device(self, device_id: int) -> DeviceProfile:
        return self._by_id[device_id]

    @cached_property
    def _by_id(self) -> dict[int, DeviceProfile]:
        return {d.id: d for d in self.devices}


@dataclass(frozen=True)
class ScheduleSolution:
    selected: tuple[int, ...]  # sorted device ids
    assignment: dict  # device id -> channel index
    channel_loads: tuple[float, ...]
    makespan: float
    expenditure: float
    objective: float


@dataclass(frozen=True)
class Group:
    level: float  # upload-time cap for this group
    member_ids: tuple[int, ...]
    data_total: float
    meets_requirement: bool


@dataclass
class GatherRound:
    y_delta: float
    chosen: int
    residual_before: float


@dataclass
class DualState:
    selected: list[int] = field(default_factory=list)
    potentials: dict[int, float] = field(default_factory=dict)
    rounds: list[GatherRound] = field(default_factory=list)


def normalized_cost(instance: TrainInstance, device: DeviceProfile) -> float:
    """Per-device share of the objective: alpha*c(i) + beta*t(i)/channels."""
    return instance.alpha * device.expenditure + \
        instance.beta * device.upload_time / instance.channels


def objective(instance: TrainInstance, selected, makespan: float) -> float:
    total_c = sum(instance.device(i).expenditure for i in selected)
    return instance.alpha * total_c + instance.beta * makespan


# ---------------------------------------------------------------------------
# phase 1: upload-time level grouping
# ---------------------------------------------------------------------------

def group_by_upload_time(instance: TrainInstance) -> list[Group]:
    """One group per distinct upload time, in nondecreasing level order.

    A group at level l holds every device with t(i) <= l and skewness
    within the threshold. Groups whose total data misses the requirement
    are flagged; if none meets it the instance is infeasible.
    """
    levels = sorted({d.upload_time for d in instance.devices})
    groups = []
    for level in levels:
        members = tuple(sorted(
            d.id for d in instance.devices
            if d.upload_time <= level and d.skewness <= instance.skew_threshold
        ))
        data_total = sum(instance.device(i).data_quantity for i in members)
        groups.append(Group(level, members, data_total,
                            data_total >= instance.data_requirement))
    if not any(g.meets_requirement for g in groups):
        raise InfeasibleError(
            "no upload-time group reaches the data requirement "
            f"{instance.data_requirement}"
        )
    return groups


# ---------------------------------------------------------------------------
# phase 2: primal-dual gathering
# ---------------------------------------------------------------------------

def gather_min_cost_subset(member_ids, instance: TrainInstance
                           ) -> tuple[tuple[int, ...], DualState]:
    """Primal-dual covering loop over one group.

    Repeats until the selection's data meets the requirement: compute
    y(i) = (cost(i) - b_i) / s(i) with s(i) = min(D(i), residual demand),
    pick the argmin (lowest id on ties), and raise every unselected b_i by
    s(i) * min-y. Potentials are nondecreasing and never exceed cost(i).
    """
    members = sorted(member_ids)
    total_data = sum(instance.device(i).data_quantity for i in members)
    if total_data < instance.data_requirement:
        raise InfeasibleError(
            f"group data {total_data} below requirement {instance.data_requirement}"
        )
    state = DualState(potentials={i: 0.0 for i in members})
    selected: list[int] = []
    selected_data = 0.0
    remaining = list(members)
    while selected_data < instance.data_requirement and remaining:
        residual = instance.data_requirement - selected_data
        best_id = None
        best_y = math.inf
        for i in remaining:
            dev = instance.device(i)
            s_i = min(dev.data_quantity, residual)
            if s_i <= 0:
                continue
            y_i = (normalized_cost(instance, dev) - state.potentials[i]) / s_i
            if y_i < best_y:
                best_y = y_i
                best_id = i
        if best_id is None:
            break  # only zero-data devices left; cannot make progress
        for i in remaining:
            s_i = min(instance.device(i).data_quantity, residual)
            state.potentials[i] += s_i * best_y
        state.rounds.append(GatherRound(best_y, best_id, residual))
        remaining.remove(best_id)
        selected.append(best_id)
        selected_data += instance.device(best_id).data_quantity
    state.selected = selected
    return tuple(sorted(selected)), state


# ---------------------------------------------------------------------------
# phase 3: LPT scheduling
# ---------------------------------------------------------------------------

def schedule_lpt(devices, channels: int):
    """Longest-processing-time list scheduling.

    Devices in nonincreasing t(i) order (ties to the lowest id) go to the
    currently least loaded channel (ties to the lowest index). Returns
    (assignment, per-channel loads, makespan). An empty selection yields
    zero loads.
    """
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    loads = [0.0] * channels
    assignment: dict[int, int] = {}
    ordered = sorted(devices, key=lambda d: (-d.upload_time, d.id))
    for dev in ordered:
        ch = min(range(channels), key=lambda k: loads[k])
        assignment[dev.id] = ch
        loads[ch] += dev.upload_time
    makespan = max(loads)
    if ordered:
        # guaranteed by LPT: last-finishing job started before the mean load
        bound = sum(d.upload_time for d in ordered) / channels + \
            max(d.upload_time for d in ordered)
        if makespan > bound + _BOUND_SLACK:
            raise AssertionError(
                f"LPT bound violated: makespan {makespan} > {bound}"
            )
    return assignment, tuple(loads), makespan


# ---------------------------------------------------------------------------
# phase 4: candidate selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    selected: tuple[int, ...]
    assignment: dict
    channel_loads: tuple[float, ...]
    makespan: float
    cost: float  # alpha * sum(c) + beta * makespan
    dual: DualState | None = None


def select_best_candidate(candidates, instance: TrainInstance) -> ScheduleSolution:
    """Min combined cost; ties break to smaller makespan, then smaller set."""
    feasible = [
        c for c in candidates
        if sum(instance.device(i).data_quantity for i in c.selected)
        >= instance.data_requirement
    ]
    if not feasible:
        raise InfeasibleError("no candidate meets the data requirement")
    best = min(feasible, key=lambda c: (c.cost, c.makespan, c.selected))
    expenditure = sum(instance.device(i).expenditure for i in best.selected)
    return ScheduleSolution(best.selected, dict(best.assignment),
                            best.channel_loads, best.makespan, expenditure,
                            objective(instance, best.selected, best.makespan))


def _empty_solution(instance: TrainInstance) -> ScheduleSolution:
    return ScheduleSolution((), {}, tuple([0.0] * instance.channels), 0.0, 0.0, 0.0)


def _candidate_from_subset(subset_ids, instance: TrainInstance,
                           dual: DualState | None = None) -> Candidate:
    devs = [instance.device(i) for i in subset_ids]
    assignment, loads, makespan = schedule_lpt(devs, instance.channels)
    cost = objective(instance, subset_ids, makespan)
    return Candidate(tuple(sorted(subset_ids)), assignment, loads, makespan,
                     cost, dual)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_primal_dual(instance: TrainInstance) -> ScheduleSolution:
    """Level grouping -> primal-dual gathering -> LPT -> best candidate."""
    if instance.data_requirement <= 0:
        return _empty_solution(instance)
    groups = group_by_upload_time(instance)
    candidates = []
    for group in groups:
        if not group.meets_requirement:
            continue
        subset, dual = gather_min_cost_subset(group.member_ids, instance)
        candidates.append(_candidate_from_subset(subset, instance, dual))
    return select_best_candidate(candidates, instance)


def _prefix_solution(order, instance: TrainInstance) -> ScheduleSolution:
    selected: list[int] = []
    data = 0.0
    for i in order:
        if data >= instance.data_requirement:
            break
        selected.append(i)
        data += instance.device(i).data_quantity
    if data < instance.data_requirement:
        raise InfeasibleError(
            f"total data {data} below requirement {instance.data_requirement}"
        )
    cand = _candidate_from_subset(tuple(sorted(selected)), instance)
    return select_best_candidate([cand], instance)


def solve_random(instance: TrainInstance, rng: np.random.Generator) -> ScheduleSolution:
    """Baseline: uniformly random order, prefix until the data requirement."""
    if instance.data_requirement <= 0:
        return _empty_solution(instance)
    ids = sorted(d.id for d in instance.devices)
    order = [ids[k] for k in rng.permutation(len(ids))]
    return _prefix_solution(order, instance)


def solve_greedy_density(instance: TrainInstance) -> ScheduleSolution:
    """Baseline: data-per-cost order (free devices first), prefix until met."""
    if instance.data_requirement <= 0:
        return _empty_solution(instance)

    def density(dev: DeviceProfile) -> float:
        if dev.expenditure == 0:
            return math.inf
        return dev.data_quantity / dev.expenditure

    order = [d.id for d in sorted(instance.devices,
                                  key=lambda d: (-density(d), d.id))]
    return _prefix_solution(order, instance)


def _optimal_makespan(times: list[float], channels: int, upper: float) -> float:
    """Exact minimum makespan by branch-and-bound over assignments."""
    times = sorted(times, reverse=True)
    best = upper

    def rec(idx: int, loads: tuple[float, ...], current_max: float):
        nonlocal best
        if current_max >= best:
            return
        if idx == len(times):
            best = current_max
            return
        seen = set()
        for k in range(channels):
            if loads[k] in seen:
                continue  # symmetric to an already-tried channel
            seen.add(loads[k])
            new = loads[k] + times[idx]
            if new >= best:
                continue
            rec(idx + 1,
                loads[:k] + (new,) + loads[k + 1:],
                max(current_max, new))

    rec(0, tuple([0.0] * channels), 0.0)
    return best


def solve_brute_force(instance: TrainInstance, size_cap: int = 10) -> ScheduleSolution:
    """Exhaustive optimum over all low-skew subsets with enough data.

    Makespans are exact (exhaustive channel assignment with pruning), so
    the result is the true optimum of the objective. Only for small
    instances: |devices| <= size_cap and channels <= 3.
    """
    if len(instance.devices) > size_cap:
        raise ValueError(
            f"instance has {len(instance.devices)} devices, cap is {size_cap}"
        )
    if instance.channels > 3:
        raise ValueError(f"channels must be <= 3, got {instance.channels}")
    eligible = sorted(
        (d for d in instance.devices if d.skewness <= instance.skew_threshold),
        key=lambda d: d.id,
    )
    best: ScheduleSolution | None = None
    for r in range(len(eligible) + 1):
        for combo in itertools.combinations(eligible, r):
            data = sum(d.data_quantity for d in combo)
            if data < instance.data_requirement:
                continue
            ids = tuple(d.id for d in combo)
            cost_c = instance.alpha * sum(d.expenditure for d in combo)
            if combo:
                times = [d.upload_time for d in combo]
                lower = max(max(times), sum(times) / instance.channels)
                if best is not None and \
                        cost_c + instance.beta * lower > best.objective:
                    continue
                _, _, lpt_makespan = schedule_lpt(combo, instance.channels)
                makespan = _optimal_makespan(times, instance.channels,
                                             lpt_makespan)
            else:
                makespan = 0.0
            obj = cost_c + instance.beta * makespan
            if best is None or obj < best.objective or (
                obj == best.objective and (makespan, ids) <
                (best.makespan, best.selected)
            ):
                if combo:
                    assignment, loads = _exact_assignment(
                        combo, instance.channels, makespan)
                else:
                    assignment, loads = {}, tuple([0.0] * instance.channels)
                expenditure = sum(d.expenditure for d in combo)
                best = ScheduleSolution(ids, assignment, loads, makespan,
                                        expenditure, obj)
    if best is None:
        raise InfeasibleError("no feasible subset meets the data requirement")
    return best


def _exact_assignment(devices, channels: int, target_makespan: float):
    """First assignment (in id-major order) whose makespan hits the target."""
    devices = sorted(devices, key=lambda d: (-d.upload_time, d.id))

    def rec(idx: int, loads: list[float], assignment: dict):
        if idx == len(devices):
            return dict(assignment), tuple(loads)
        seen = set()
        for k in range(channels):
            if loads[k] in seen:
                continue
            seen.add(loads[k])
            new = loads[k] + devices[idx].upload_time
            if new <= target_makespan + _BOUND_SLACK:
                loads[k] = new
                assignment[devices[idx].id] = k
                found = rec(idx + 1, loads, assignment)
                if found:
                    return found
                loads[k] = new - devices[idx].upload_time
                del assignment[devices[idx].id]
        return None

    found = rec(0, [0.0] * channels, {})
    if found is None:  # fp slack too tight; fall back to the LPT assignment
        assignment, loads, _ = schedule_lpt(devices, channels)
        return assignment, loads
    return found


# ---------------------------------------------------------------------------
# validators and random instances
# ---------------------------------------------------------------------------

def satisfies_constraints(instance: TrainInstance,
                          solution: ScheduleSolution) -> bool:
    """Data requirement met and every selected device within the skew cap."""
    data = sum(instance.device(i).data_quantity for i in solution.selected)
    if data < instance.data_requirement:
        return False
    return all(instance.device(i).skewness <= instance.skew_threshold
               for i in solution.selected)


def aggregate_skew_ok(instance: TrainInstance, selected) -> bool:
    """Whether the *summed* skewness also stays within the threshold.

    The solvers filter per device; this reports the stricter aggregate
    reading so both interpretations stay observable.
    """
    return sum(instance.device(i).skewness for i in selected) \
        <= instance.skew_threshold


def lpt_bound_holds(instance: TrainInstance, solution: ScheduleSolution) -> bool:
    """makespan <= sum(t)/channels + max(t) for the selected devices."""
    if not solution.selected:
        return solution.makespan == 0.0
    times = [instance.device(i).upload_time for i in solution.selected]
    return solution.makespan <= sum(times) / instance.channels + max(times) \
        + _BOUND_SLACK


def random_instance(rng: np.random.Generator,
                    n_devices_range: tuple[int, int] = (3, 8),
                    channels_range: tuple[int, int] = (1, 3)) -> TrainInstance:
    """Small random instance, always feasible, skew filter inactive."""
    n = int(rng.integers(n_devices_range[0], n_devices_range[1] + 1))
    channels = int(rng.integers(channels_range[0], channels_range[1] + 1))
    devices = tuple(
        DeviceProfile(
            id=i + 1,
            upload_time=float(rng.uniform(1e-3, 2.0)),
            data_quantity=float(rng.integers(1, 101)),
            skewness=0.0,
            expenditure=float(rng.uniform(1e-3, 1.0)),
        )
        for i in range(n)
    )
    total = sum(d.data_quantity for d in devices)
    requirement = float(rng.uniform(0.2, 1.0)) * total
    return TrainInstance(devices, channels, requirement,
                         skew_threshold=math.inf,
                         alpha=float(rng.uniform(0.0, 1.0)),
                         beta=float(rng.uniform(0.0, 1.0)))


# ---------------------------------------------------------------------------
# instance / solution files
# ---------------------------------------------------------------------------

def save_instance(instance: TrainInstance, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# channels={instance.channels}\n")
        fh.write(f"# data_requirement={instance.data_requirement!r}\n")
        fh.write(f"# skew_threshold={instance.skew_threshold!r}\n")
        fh.write(f"# alpha={instance.alpha!r}\n")
        fh.write(f"# beta={instance.beta!r}\n")
        fh.write(f"# deadline={instance.deadline!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "t", "D", "E", "c"])
        for d in sorted(instance.devices, key=lambda d: d.id):
            writer.writerow([d.id, repr(d.upload_time), repr(d.data_quantity),
                             repr(d.skewness), repr(d.expenditure)])


def load_instance(path) -> TrainInstance:
    header: dict[str, float] = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                header[key.strip()] = float(value)
                continue
            rows.append(line)
    reader = csv.reader(rows)
    columns = next(reader)
    if columns != ["id", "t", "D", "E", "c"]:
        raise ValueError(f"unexpected instance columns {columns} in {path}")
    devices = tuple(
        DeviceProfile(int(r[0]), float(r[1]), float(r[2]), float(r[3]),
                      float(r[4]))
        for r in reader
    )
    try:
        return TrainInstance(
            devices=devices,
            channels=int(header["channels"]),
            data_requirement=header["data_requirement"],
            skew_threshold=header.get("skew_threshold", math.inf),
            alpha=header.get("alpha", 0.5),
            beta=header.get("beta", 0.5),
            deadline=header.get("deadline", math.inf),
        )
    except KeyError as missing:
        raise ValueError(f"instance file missing header field {missing}") from None


def save_solution(solution: ScheduleSolution, path) -> None:
    doc = {
        "selected": list(solution.selected),
        "assignment": {str(k): v for k, v in sorted(solution.assignment.items())},
        "channel_loads": list(solution.channel_loads),
        "makespan": solution.makespan,
        "expenditure": solution.expenditure,
        "objective": solution.objective,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
