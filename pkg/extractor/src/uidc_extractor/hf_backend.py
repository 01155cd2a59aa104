"""Transformers-backed scoring for real checkpoints (text-only or vision-language).

Loaded lazily; everything model-specific (prompt framing for interleaved
image-text scoring) is driven by a small template so new checkpoints need
configuration, not code. Requires the ``hf`` extra (torch + transformers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .backends import (
    IMAGE,
    TEXT,
    Backend,
    ContextSegment,
    JobError,
    Piece,
    ScoredTarget,
    WS_MARKERS,
)


@dataclass(frozen=True)
class PromptTemplate:
    """How context segments are joined in front of the target text."""

    text_separator: str = "\n"
    image_token: str | None = None  # None: let the processor insert image tokens


class HFBackend(Backend):
    name = "hf"

    def __init__(self, model_id: str, device: str = "cpu", dtype: str = "float32",
                 template: PromptTemplate | None = None,
                 max_context_tokens: int | None = None):
        try:
            import torch
            from transformers import AutoConfig, AutoTokenizer
        except ImportError as exc:
            raise JobError(f"hf backend needs torch+transformers installed: {exc}") from exc
        self.torch = torch
        self.model_id = model_id
        self.device = device
        self.template = template or PromptTemplate()
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            config = AutoConfig.from_pretrained(model_id)
            self.supports_images = getattr(config, "vision_config", None) is not None
            if self.supports_images:
                from transformers import AutoModelForImageTextToText, AutoProcessor

                self.processor = AutoProcessor.from_pretrained(model_id)
                self.model = AutoModelForImageTextToText.from_pretrained(
                    model_id, torch_dtype=getattr(torch, dtype)
                )
            else:
                from transformers import AutoModelForCausalLM

                self.processor = None
                self.model = AutoModelForCausalLM.from_pretrained(
                    model_id, torch_dtype=getattr(torch, dtype)
                )
        except (OSError, ValueError) as exc:
            raise JobError(f"cannot load model {model_id!r}: {exc}") from exc
        self.model.to(device)
        self.model.eval()
        self.max_context_tokens = max_context_tokens or getattr(
            config, "max_position_embeddings", 8192
        )
        self.name = f"hf:{model_id}"
        vocab = self.tokenizer.convert_ids_to_tokens(range(len(self.tokenizer)))
        self._ws_ids = [
            i for i, tok in enumerate(vocab)
            if isinstance(tok, str) and tok.startswith(tuple(WS_MARKERS))
        ]

    def tokenize(self, text: str) -> list[Piece]:
        encoding = self.tokenizer(text, add_special_tokens=False,
                                  return_offsets_mapping=True)
        tokens = self.tokenizer.convert_ids_to_tokens(encoding["input_ids"])
        return [
            Piece(tok, (start, end))
            for tok, (start, end) in zip(tokens, encoding["offset_mapping"])
        ]

    def count_tokens(self, text: str) -> int:
        return len(self.tokenizer(text, add_special_tokens=False)["input_ids"])

    def _prepare_inputs(self, context: Sequence[ContextSegment], target: str):
        texts = [seg.value for seg in context if seg.kind == TEXT]
        images = [seg.value for seg in context if seg.kind == IMAGE]
        prefix = self.template.text_separator.join(texts)
        if prefix:
            prefix += self.template.text_separator
        if images and not self.supports_images:
            raise JobError(f"model {self.model_id} cannot take image context")
        if images:
            from PIL import Image

            loaded = [Image.open(path).convert("RGB") for path in images]
            image_tokens = (self.template.image_token or "") * len(images)
            full = image_tokens + prefix + target
            inputs = self.processor(text=full, images=loaded, return_tensors="pt")
        else:
            full = prefix + target
            inputs = self.tokenizer(full, return_tensors="pt")
        target_ids = self.tokenizer(target, add_special_tokens=False)["input_ids"]
        return inputs.to(self.device), target_ids

    def score(self, context: Sequence[ContextSegment], target: str) -> ScoredTarget:
        torch = self.torch
        pieces = self.tokenize(target)
        if not pieces:
            raise JobError("cannot score empty target text")
        inputs, target_ids = self._prepare_inputs(context, target)
        n_target = len(target_ids)
        with torch.no_grad():
            logits = self.model(**inputs).logits[0]
        input_ids = inputs["input_ids"][0]
        if n_target > input_ids.shape[0]:
            raise JobError("target tokenization does not embed in the full prompt")
        log_softmax = torch.log_softmax(logits.float(), dim=-1)
        # Positions of the target tokens are the last n_target of the prompt.
        first = input_ids.shape[0] - n_target
        logprobs = []
        ws_mass = []
        for offset in range(n_target):
            position = first + offset - 1
            row = log_softmax[position]
            logprobs.append(float(row[input_ids[first + offset]]))
            ws_mass.append(float(torch.logsumexp(row[self._ws_ids], dim=0).exp()))
        final_row = log_softmax[input_ids.shape[0] - 1]
        ws_ids = list(self._ws_ids)
        if self.tokenizer.eos_token_id is not None:
            ws_ids.append(self.tokenizer.eos_token_id)
        ws_mass.append(float(torch.logsumexp(final_row[ws_ids], dim=0).exp()))
        return ScoredTarget(tuple(pieces), tuple(logprobs), tuple(ws_mass))
