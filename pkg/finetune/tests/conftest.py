import json

import pytest


@pytest.fixture(scope="session")
def tiny_base_model(tmp_path_factory):
    """A tiny randomly initialized causal LM with a word-level tokenizer,
    saved locally so training and serving run offline on CPU."""
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")
    from tokenizers import Tokenizer, models, pre_tokenizers, trainers

    model_dir = tmp_path_factory.mktemp("tiny-base-model")
    config = transformers.GPT2Config(
        vocab_size=512, n_positions=256, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=2, eos_token_id=2,
    )
    torch.manual_seed(0)
    model = transformers.GPT2LMHeadModel(config)
    model.save_pretrained(model_dir)

    tokenizer = Tokenizer(models.WordLevel(unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordLevelTrainer(
        vocab_size=512, special_tokens=["[UNK]", "[PAD]", "[EOS]"]
    )
    corpus = [
        "Extract every distinct lesion from the report below into a list of "
        "JSON dictionaries with location side_of_breast clock_position "
        "distance_from_nipple depth type shape margin echogenicity "
        "calcifications vascularity posterior_features suspicion subtype "
        "next_step values { } [ ] : , \" n/a left right cyst mass benign "
        "Observation Impression position breast cm recommend follow-up"
    ]
    tokenizer.train_from_iterator(corpus, trainer)
    fast = transformers.PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]",
        pad_token="[PAD]",
        eos_token="[EOS]",
    )
    fast.save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture()
def sample_dataset(tmp_path):
    """Ten dataset records in the pipeline's interchange format."""
    path = tmp_path / "data.jsonl"
    rows = []
    for i in range(10):
        rows.append(
            {
                "id": f"r{i}",
                "instruction": "Extract every distinct lesion from the report below "
                "into a list of JSON dictionaries .",
                "input": f"Observation : left {i % 12 + 1} : 00 position , a cyst .",
                "output": '[{"location": {"side_of_breast": "left"}, "type": "cyst"}]',
            }
        )
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return str(path)
