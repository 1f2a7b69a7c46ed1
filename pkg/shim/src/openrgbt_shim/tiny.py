"""Locally-built tiny models for the offline self-test configuration.

These are randomly initialized (seeded) scale models of the real
architectures: outputs are meaningless but structurally identical, which
is enough to exercise every adapter and the full wire path without
downloading checkpoints.
"""

from __future__ import annotations

import torch

from .adapters import ClipEmbedderAdapter, SamSegmenterAdapter, TextDetectorAdapter

TINY_SEED = 1234
TINY_WORDS = [
    "car", "person", "bike", "bicycle", "cone", "vehicle", "hydrant",
    "bench", "dog", "a", "an", "photo", "of", "the", "thermal",
]


def tiny_tokenizer():
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast

    vocab = {"<pad>": 0, "<unk>": 1, "<bos>": 2, "<eos>": 3}
    for word in TINY_WORDS:
        vocab[word] = len(vocab)
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = Whitespace()
    tokenizer.post_processor = TemplateProcessing(
        single="<bos> $A <eos>", special_tokens=[("<bos>", 2), ("<eos>", 3)]
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="<pad>",
        unk_token="<unk>",
        bos_token="<bos>",
        eos_token="<eos>",
        model_max_length=16,
    )


def tiny_clip():
    from transformers import CLIPConfig, CLIPImageProcessor, CLIPModel, CLIPTextConfig, CLIPVisionConfig

    torch.manual_seed(TINY_SEED)
    config = CLIPConfig(
        text_config=CLIPTextConfig(
            hidden_size=32,
            intermediate_size=37,
            num_attention_heads=4,
            num_hidden_layers=2,
            vocab_size=64,
            max_position_embeddings=16,
        ).to_dict(),
        vision_config=CLIPVisionConfig(
            hidden_size=32,
            intermediate_size=37,
            num_attention_heads=4,
            num_hidden_layers=2,
            image_size=30,
            patch_size=15,
        ).to_dict(),
        projection_dim=16,
    )
    model = CLIPModel(config)
    processor = CLIPImageProcessor(
        size={"shortest_edge": 30}, crop_size={"height": 30, "width": 30}
    )
    return model, processor


def tiny_owlvit():
    from transformers import (
        OwlViTConfig,
        OwlViTForObjectDetection,
        OwlViTImageProcessor,
        OwlViTTextConfig,
        OwlViTVisionConfig,
    )

    torch.manual_seed(TINY_SEED + 1)
    config = OwlViTConfig(
        text_config=OwlViTTextConfig(
            hidden_size=32,
            intermediate_size=37,
            num_attention_heads=4,
            num_hidden_layers=2,
            vocab_size=64,
            max_position_embeddings=16,
        ).to_dict(),
        vision_config=OwlViTVisionConfig(
            hidden_size=32,
            intermediate_size=37,
            num_attention_heads=4,
            num_hidden_layers=2,
            image_size=32,
            patch_size=8,
        ).to_dict(),
        projection_dim=32,
    )
    model = OwlViTForObjectDetection(config)
    processor = OwlViTImageProcessor(size={"height": 32, "width": 32})
    return model, processor


def tiny_sam():
    from transformers import (
        SamConfig,
        SamImageProcessor,
        SamMaskDecoderConfig,
        SamModel,
        SamProcessor,
        SamPromptEncoderConfig,
        SamVisionConfig,
    )

    torch.manual_seed(TINY_SEED + 2)
    config = SamConfig(
        vision_config=SamVisionConfig(
            hidden_size=24,
            num_attention_heads=2,
            num_hidden_layers=2,
            image_size=64,
            patch_size=8,
            output_channels=16,
            mlp_dim=48,
            num_pos_feats=8,
        ).to_dict(),
        prompt_encoder_config=SamPromptEncoderConfig(
            hidden_size=16, image_size=64, patch_size=8, image_embedding_size=8
        ).to_dict(),
        mask_decoder_config=SamMaskDecoderConfig(
            hidden_size=16, num_attention_heads=2, iou_head_hidden_dim=16, mlp_dim=32
        ).to_dict(),
    )
    model = SamModel(config)
    processor = SamProcessor(
        SamImageProcessor(size={"longest_edge": 64}, pad_size={"height": 64, "width": 64})
    )
    return model, processor


def build_tiny_adapters(device: str = "cpu") -> dict:
    tokenizer = tiny_tokenizer()
    clip_model, clip_processor = tiny_clip()
    owl_model, owl_processor = tiny_owlvit()
    sam_model, sam_processor = tiny_sam()
    return {
        "text_detector": TextDetectorAdapter(
            owl_model, owl_processor, tokenizer, device=device, score_threshold=0.1
        ),
        "embedder": ClipEmbedderAdapter(clip_model, clip_processor, tokenizer, device=device),
        "segmenter": SamSegmenterAdapter(sam_model, sam_processor, device=device),
    }
