from __future__ import annotations

import numpy as np

from calyx_assess.exceptions import DimensionMismatch
from calyx_assess.localization.model import ReferenceModel
from calyx_assess.types import QueryFrame
from calyx_assess.validators import validate_positive_int

__all__ = ["retrieve_candidates"]


def retrieve_candidates(q: QueryFrame, model: ReferenceModel, k: int) -> list[tuple[int, float]]:
    """Rank reference frames by cosine similarity of their global descriptors to the query's

    :param q: Query frame
    :param model: Reference model
    :param k: Maximum number of candidates
    :returns: Up to k (frame_id, similarity) pairs, most similar first; ties go to the lower frame id
    """
    validate_positive_int("k", k)
    if not len(model):
        return []
    if len(q.global_descriptor) != model.descriptor_dim:
        raise DimensionMismatch(
            f"frame {q.frame_id}: Global descriptor has dimension {len(q.global_descriptor)}, but the reference "
            f"model uses {model.descriptor_dim}"
        )
    norms = np.linalg.norm(model.descriptors, axis=1) * np.linalg.norm(q.global_descriptor)
    sims = np.clip((model.descriptors @ q.global_descriptor) / norms, -1.0, 1.0)
    order = np.lexsort((model.frame_ids, -sims))[:k]
    return [(int(model.frame_ids[i]), float(sims[i])) for i in order]
