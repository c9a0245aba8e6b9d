import numpy as np
import pytest
import torch

from radvlp.labels.schemas import DESK_8
from radvlp.models.dual import (
    CheckpointError,
    build_model,
    load_checkpoint,
    load_parts,
    read_checkpoint,
    save_checkpoint,
)
from radvlp.models.heads import SegDecoder, shared_classifier
from radvlp.models.text import TextEncoder, TextEncoderConfig, Tokenizer, words
from radvlp.models.vision import VisionEncoder, VisionEncoderConfig, pool_features


def test_words_split_punctuation():
    assert words("No Emphysema. Heart is 12cm!") == ["no", "emphysema", ".", "heart", "is", "12cm", "!"]


def test_tokenizer_build_encode_batch():
    tok = Tokenizer.build(["There is emphysema.", "No emphysema."], max_tokens=5)
    assert tok.vocab[:3] == ["[PAD]", "[UNK]", "[CLS]"]
    ids = tok.encode("there is nodule . extra words")
    assert ids[0] == tok.cls_id and ids[3] == tok.unk_id and len(ids) == 5
    b = tok.batch(["no", "there is emphysema"])
    assert b.shape == (2, 4) and b[0, 2:].tolist() == [tok.pad_id, tok.pad_id]
    assert tok.sentence_end_id == tok.index["."]


def test_tokenizer_requires_specials():
    with pytest.raises(ValueError):
        Tokenizer(["a", "b", "c"])


def _text_encoder(tok, attention="sentence", dropout=0.0):
    cfg = TextEncoderConfig(
        vocab_size=len(tok), max_tokens=tok.max_tokens, cls_token_id=tok.cls_id, pad_token_id=tok.pad_id,
        sentence_end_id=tok.sentence_end_id, attention=attention, dropout=dropout,
    )
    torch.manual_seed(0)
    return TextEncoder(cfg).eval()


def test_sentence_attention_mask_blocks():
    tok = Tokenizer.build(["a b. c d."])
    enc = _text_encoder(tok)
    tokens = tok.batch(["a b. c d.", "a."])
    mask = enc.attention_mask(tokens)[:: enc.cfg.heads]
    allowed = torch.isfinite(mask)
    # sequence: cls a b . c d .
    first = allowed[0]
    assert first[0].all() and first[:, 0].all()  # CLS sees and is seen by everything
    assert first[1, 1:4].all() and not first[1, 4:].any()  # "a" sees only its own sentence
    assert first[4, 4:7].all() and not first[4, 1:4].any()
    # second row: padding keys are never visible
    assert not allowed[1][:, 3:].any()


def test_full_attention_only_blocks_padding():
    tok = Tokenizer.build(["a b. c d."])
    allowed = torch.isfinite(_text_encoder(tok, "full").attention_mask(tok.batch(["a b. c d.", "a."])))
    assert allowed[0].all() and not allowed[-1][:, 3:].any()


def test_text_embedding_ignores_padding():
    tok = Tokenizer.build(["there is emphysema . no nodule ."])
    enc = _text_encoder(tok)
    alone = enc(tok.batch(["there is emphysema."]))
    padded = enc(tok.batch(["there is emphysema.", "there is emphysema. no nodule."]))[:1]
    assert torch.allclose(alone, padded, atol=1e-5)


def test_text_rejects_bad_ids():
    tok = Tokenizer.build(["a"])
    with pytest.raises(ValueError):
        _text_encoder(tok)(torch.tensor([[2, 99]]))


def test_text_config_validation():
    with pytest.raises(ValueError):
        TextEncoderConfig(hidden_dim=10, heads=4)
    with pytest.raises(ValueError):
        TextEncoderConfig(attention="local")


@pytest.mark.parametrize("stem,stride", [("lite", 8), ("standard", 8)])
def test_vision_shapes(stem, stride):
    cfg = VisionEncoderConfig(stem=stem)
    assert cfg.total_stride == stride
    enc = VisionEncoder(cfg).eval()
    fm, emb = enc(torch.zeros(2, 32, 32, 16))
    assert fm.shape == (2, 32, 4, 4, 2) and emb.shape == (2, 64)


def test_vision_rejects_too_small_input():
    with pytest.raises(ValueError):
        VisionEncoder(VisionEncoderConfig())(torch.zeros(1, 32, 32, 4))


def test_pooling_modes():
    fm = torch.randn(2, 3, 2, 2, 2, dtype=torch.float64)
    flat = fm.flatten(2)
    assert torch.allclose(pool_features(fm, "gap"), flat.mean(2))
    assert torch.equal(pool_features(fm, "max"), flat.amax(2))
    expected = 1 - torch.prod(1 - torch.sigmoid(flat), dim=2)
    assert torch.allclose(pool_features(fm, "noisy_or"), expected)
    with pytest.raises(ValueError):
        pool_features(fm, "median")


def test_gap_embedding_is_linear_in_features():
    enc = VisionEncoder(VisionEncoderConfig()).double()
    fm = torch.randn(1, 32, 4, 4, 2, dtype=torch.float64)
    # proj(GAP(fm)) == mean over positions of proj applied per position
    per_pos = enc.proj(fm.flatten(2).transpose(1, 2)).mean(1)
    assert torch.allclose(enc.embed(fm), per_pos)


def test_shared_classifier_and_seg_decoder():
    w, b = torch.randn(8, 64), torch.randn(8)
    e = torch.randn(3, 64)
    assert torch.allclose(shared_classifier(e, w, b), e @ w.T + b)
    with pytest.raises(ValueError):
        shared_classifier(torch.randn(3, 10), w, b)
    dec = SegDecoder(32, 10, 8)
    assert dec(torch.randn(1, 32, 4, 4, 2)).shape == (1, 10, 32, 32, 16)
    assert dec(torch.randn(1, 32, 4, 4, 2), out_shape=(30, 30, 15)).shape == (1, 10, 30, 30, 15)


def test_model_embed_dims_must_match(tiny_tokenizer):
    with pytest.raises(ValueError):
        build_model(DESK_8, tiny_tokenizer, vision_cfg=VisionEncoderConfig(embed_dim=32))


def test_checkpoint_roundtrip(tmp_path, tiny_model):
    path = save_checkpoint(tiny_model, tmp_path / "m.npz", extra={"stage": "x"})
    back = load_checkpoint(path)
    meta, _ = read_checkpoint(path)
    assert meta["extra"] == {"stage": "x"}
    for (k, a), (k2, b) in zip(tiny_model.state_dict().items(), back.state_dict().items()):
        assert k == k2 and torch.equal(a, b)
    tiny_model.eval()
    x = torch.from_numpy(np.random.default_rng(0).normal(size=(1, 32, 32, 16)).astype(np.float32))
    assert torch.equal(tiny_model.encode_image(x), back.encode_image(x))
    assert torch.equal(tiny_model.encode_text(["no emphysema."]), back.encode_text(["no emphysema."]))


def test_checkpoint_errors(tmp_path, tiny_model):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")
    np.savez(tmp_path / "bad.npz", a=np.zeros(2))
    with pytest.raises(CheckpointError, match="meta"):
        load_checkpoint(tmp_path / "bad.npz")


def test_load_parts_copies_only_prefixes(tmp_path, tiny_tokenizer):
    src = build_model(DESK_8, tiny_tokenizer, seed=1)
    dst = build_model(DESK_8, tiny_tokenizer, seed=2)
    path = save_checkpoint(src, tmp_path / "src.npz")
    load_parts(dst, path, ("vision.",))
    assert torch.equal(dst.vision.proj.weight, src.vision.proj.weight)
    assert not torch.equal(dst.text.proj.weight, src.text.proj.weight)
    other = build_model(DESK_8, Tokenizer.build(["completely different words"]), seed=2)
    with pytest.raises(CheckpointError, match="vocabulary"):
        load_parts(other, path, ("vision.",))
