"""CRF hyperparameter search against validation segmentation quality.

The objective (mean IoU of the decoded mean-field labeling) is piecewise
constant in the parameters, so a derivative-free simplex search runs in
log-space, keeping every parameter strictly positive. Best-seen semantics:
the returned point is the best objective among all evaluations, which always
includes the starting parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import softmax_probmaps
from .crf import CrfInstance, CrfParams, decode_map, mean_field_infer
from .metrics import iou_report

_PARAM_ORDER = ("w1", "w2", "sigma_position", "sigma_color", "sigma_smooth")


class ObjectiveError(RuntimeError):
    """Objective evaluation failed on a specific validation item."""

    def __init__(self, item_id, cause):
        super().__init__(f"objective evaluation failed on item {item_id!r}: {cause}")
        self.item_id = item_id


@dataclass
class TuneResult:
    params: CrfParams
    objective: float
    initial_objective: float
    evaluations: int


def _params_from_log(x: np.ndarray) -> CrfParams:
    vals = np.exp(x)
    return CrfParams(**dict(zip(_PARAM_ORDER, map(float, vals))))


def mean_iou_objective(params: CrfParams, val_items, iterations: int = 10,
                       mode: str = "parallel") -> float:
    """Mean IoU of decode(mean_field) over (heatmaps, image, gt[, id]) items."""
    preds, gts = [], []
    num_labels = 0
    for k, item in enumerate(val_items):
        heatmaps, image, gt = item[0], item[1], item[2]
        item_id = item[3] if len(item) > 3 else k
        try:
            unary = softmax_probmaps(heatmaps)
            inst = CrfInstance(unary, image, params)
            q = mean_field_infer(inst, iterations, mode)
            preds.append(decode_map(q))
        except Exception as exc:
            raise ObjectiveError(item_id, exc) from exc
        gts.append(gt)
        num_labels = max(num_labels, heatmaps.shape[0])
    return iou_report(preds, gts, num_labels).mean_iou


class _BudgetExhausted(Exception):
    pass


def tune_crf(val_items, initial: CrfParams = CrfParams(), budget: int = 100,
             iterations: int = 10, mode: str = "parallel") -> TuneResult:
    """Maximize validation mean IoU over the five kernel parameters.

    Nelder-Mead in log-space, initial simplex offset +20% per coordinate,
    capped at `budget` objective evaluations. The objective is piecewise
    constant, so whenever the simplex converges with budget left the search
    restarts from the best point seen with a 3x larger simplex; that climbs
    out of flat regions a +-20% simplex cannot see across. Deterministic for
    fixed inputs, and the evaluation sequence does not depend on the budget
    (a larger budget only extends it).
    """
    if not val_items:
        raise ValueError("validation set must be non-empty")
    if budget < 1:
        raise ValueError("budget must be >= 1")

    history: list[tuple[float, np.ndarray]] = []

    def neg_objective(x):
        if len(history) >= budget:
            raise _BudgetExhausted
        obj = mean_iou_objective(_params_from_log(x), val_items, iterations, mode)
        history.append((obj, x.copy()))
        return -obj

    def best_seen():
        best = 0
        for i in range(1, len(history)):
            if history[i][0] > history[best][0]:
                best = i
        return history[best]

    x0 = np.array([math.log(getattr(initial, n)) for n in _PARAM_ORDER])
    base = math.log(1.2)
    round_ = 0
    try:
        while len(history) < budget:
            start = x0 if not history else best_seen()[1]
            # Triple the scale and alternate the offset sign each round; NM
            # only contracts on ties, so escaping a plateau needs an initial
            # vertex past its edge, in either direction.
            offset = base * (3.0 ** round_) * (1 if round_ % 2 == 0 else -1)
            simplex = np.vstack([start]
                                + [start + offset * np.eye(5)[i] for i in range(5)])
            before = len(history)
            optimize.minimize(neg_objective, start, method="Nelder-Mead",
                              options={"maxfev": budget - before,
                                       "initial_simplex": simplex,
                                       "xatol": 1e-2, "fatol": 1e-7})
            round_ += 1
            if len(history) == before:
                break
    except _BudgetExhausted:
        pass

    best_obj, best_x = best_seen()
    return TuneResult(_params_from_log(best_x), best_obj, history[0][0], len(history))
