"""Backend abstraction: wire protocol, transports, and deterministic mocks.

Every foundation-model capability the engine uses (text-prompt detection,
exemplar-prompt detection, image/text embedding, box-prompted segmentation)
sits behind the small interfaces in :mod:`.base`. Implementations are either
in-process mocks (:mod:`.mock`) or clients speaking the JSON protocol in
``docs/protocol.md`` over a child-process pipe or HTTP (:mod:`.transport`).
"""

from .base import Exemplar, RawDetection, SegmentResult

__all__ = ["Exemplar", "RawDetection", "SegmentResult"]
