"""Real-model backend for the openrgbt engine.

Serves the JSON wire protocol documented in the engine's
``docs/protocol.md`` over stdio or HTTP, dispatching each request to a
model adapter: a zero-shot text-grounded detector, a vision-language
embedder, and a box-promptable segmenter. Capabilities without a loaded
adapter are simply not advertised in the handshake; the engine degrades
accordingly (notably: no open visual-prompt detector exists, so that
capability is absent and detection falls back to text prompts only).
"""

__version__ = "0.1.0"
