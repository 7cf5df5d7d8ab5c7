import base64

import pytest
from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError

from eagers.backends.mocks import FixtureBackend
from eagers.backends.types import AnswerRequest, EmbedRequest, ExplainRequest
from eagers.contract import ENDPOINTS, SCHEMA_NAMES, load_schema
from eagers.errors import ConfigError

B64 = base64.b64encode(b"not really a png").decode("ascii")


def validator_for(name: str) -> Draft202012Validator:
    return Draft202012Validator(load_schema(name))


def test_every_schema_is_well_formed():
    assert len(SCHEMA_NAMES) == 7
    for name in SCHEMA_NAMES:
        Draft202012Validator.check_schema(load_schema(name))


def test_endpoint_map_pairs_request_and_response():
    assert set(ENDPOINTS) == {"/v1/explain", "/v1/answer", "/v1/embed"}
    for request_name, response_name in ENDPOINTS.values():
        assert request_name in SCHEMA_NAMES
        assert response_name in SCHEMA_NAMES


def test_unknown_schema_name():
    with pytest.raises(ConfigError):
        load_schema("bogus")


@pytest.mark.parametrize("name", ["explain_request", "answer_request"])
def test_query_request_golden(name):
    v = validator_for(name)
    good = {"image_b64": B64, "question": "What?", "prompt_id": "explain_v1", "model_id": "m"}
    v.validate(good)
    for key in good:
        with pytest.raises(ValidationError):
            v.validate({k: x for k, x in good.items() if k != key})
    with pytest.raises(ValidationError):
        v.validate({**good, "extra": 1})
    with pytest.raises(ValidationError):
        v.validate({**good, "question": ""})


def test_answer_request_rejects_explanation_field():
    with pytest.raises(ValidationError):
        validator_for("answer_request").validate(
            {
                "image_b64": B64,
                "question": "What?",
                "prompt_id": "answer_v1",
                "model_id": "m",
                "explanation": "leaked context",
            }
        )


def test_embed_request_golden():
    v = validator_for("embed_request")
    v.validate({"modality": "text", "text": "hello", "embedder_ids": ["blip"]})
    v.validate({"modality": "image", "image_b64": B64, "embedder_ids": ["blip", "clip"]})
    bad = [
        {"modality": "text", "embedder_ids": ["blip"]},
        {"modality": "image", "embedder_ids": ["blip"]},
        {"modality": "text", "image_b64": B64, "embedder_ids": ["blip"]},
        {"modality": "image", "text": "hello", "embedder_ids": ["blip"]},
        {"modality": "text", "text": "hi", "image_b64": B64, "embedder_ids": ["blip"]},
        {"modality": "audio", "text": "hi", "embedder_ids": ["blip"]},
        {"modality": "text", "text": "hi", "embedder_ids": []},
        {"modality": "text", "text": "hi", "embedder_ids": ["blip", "blip"]},
    ]
    for instance in bad:
        with pytest.raises(ValidationError):
            v.validate(instance)


def test_response_golden():
    validator_for("explain_response").validate({"explanation": "top left corner"})
    validator_for("answer_response").validate({"answer": ""})
    validator_for("embed_response").validate({"vectors": {"blip": [0.1, -0.2]}})
    validator_for("error_response").validate({"error": "boom"})
    cases = [
        ("explain_response", {"explanation": ""}),
        ("explain_response", {}),
        ("answer_response", {"answer": 3}),
        ("embed_response", {"vectors": {}}),
        ("embed_response", {"vectors": {"blip": []}}),
        ("embed_response", {"vectors": {"blip": ["x"]}}),
        ("error_response", {"error": ""}),
    ]
    for name, instance in cases:
        with pytest.raises(ValidationError):
            validator_for(name).validate(instance)


def test_request_dataclasses_emit_schema_conformant_wire_bodies():
    explain = ExplainRequest(image_b64=B64, question="q", prompt_id="explain_v1", model_id="m")
    answer = AnswerRequest(image_b64=B64, question="q", prompt_id="answer_v1", model_id="m")
    text = EmbedRequest(modality="text", text="some words", embedder_ids=("blip", "clip"))
    image = EmbedRequest(modality="image", image_b64=B64, embedder_ids=("blip",))
    validator_for("explain_request").validate(explain.to_wire())
    validator_for("answer_request").validate(answer.to_wire())
    validator_for("embed_request").validate(text.to_wire())
    validator_for("embed_request").validate(image.to_wire())


def test_mock_outputs_conform_to_response_schemas():
    backend = FixtureBackend()
    explain = backend.explain(
        ExplainRequest(image_b64=B64, question="q", prompt_id="explain_v1", model_id="m")
    )
    validator_for("explain_response").validate({"explanation": explain.explanation})
    answer = backend.answer(
        AnswerRequest(image_b64=B64, question="q", prompt_id="answer_v1", model_id="m")
    )
    validator_for("answer_response").validate({"answer": answer.answer})
    embed = backend.embed(EmbedRequest(modality="text", text="q", embedder_ids=("blip",)))
    validator_for("embed_response").validate(
        {"vectors": {k: list(v) for k, v in embed.vectors.items()}}
    )
