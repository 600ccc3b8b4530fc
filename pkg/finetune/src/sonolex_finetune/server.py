"""Chat-completions server for a trained adapter.

Speaks the same wire shape the extraction pipeline's LLM client expects:
POST /chat/completions with {model, messages, temperature, max_tokens},
replying with the first choice's message content. Two engines are
available: a local-model engine that loads a base model plus adapter, and
a stub engine that always answers with an empty lesion list, used for wire
smoke tests when no trained model is at hand.
"""

from __future__ import annotations

import time
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = ""
    messages: list[ChatMessage]
    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=512, ge=1)


class ChatChoice(BaseModel):
    index: int
    message: ChatMessage
    finish_reason: str = "stop"


class ChatUsage(BaseModel):
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int


class ChatResponse(BaseModel):
    id: str
    object: str = "chat.completion"
    created: int
    model: str
    choices: list[ChatChoice]
    usage: ChatUsage


class HealthResponse(BaseModel):
    status: str
    engine: str
    version: str


class StubEngine:
    """Deterministic stand-in engine: every prompt yields an empty lesion
    list, which is a valid structured reply for the pipeline."""

    name = "stub"

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        return "[]"


class LocalModelEngine:
    """Runs a base model with trained adapter weights re-attached."""

    name = "local"

    def __init__(self, base_model: str, adapter_dir: Optional[str] = None, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(base_model)
        self.model = AutoModelForCausalLM.from_pretrained(base_model)
        if adapter_dir is not None:
            from .lora import inject_adapters, load_adapter_metadata, load_adapter_weights

            metadata = load_adapter_metadata(adapter_dir)
            adapter = metadata["config"]
            inject_adapters(
                self.model,
                target_modules=tuple(adapter["target_modules"]),
                r=adapter["lora_r"],
                alpha=adapter["lora_alpha"],
                dropout=0.0,
            )
            load_adapter_weights(self.model, adapter_dir)
            self.name = f"local+{metadata.get('chat_template', 'adapter')}"
        self.model.to(device)
        self.model.eval()
        self.device = device

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        inputs = self.tokenizer(prompt, return_tensors="pt", truncation=True, max_length=2048)
        inputs = {k: v.to(self.device) for k, v in inputs.items()}
        with self._torch.no_grad():
            generated = self.model.generate(
                **inputs,
                max_new_tokens=max_tokens,
                do_sample=temperature > 0,
                temperature=temperature if temperature > 0 else None,
                pad_token_id=self.tokenizer.pad_token_id or self.tokenizer.eos_token_id,
            )
        new_tokens = generated[0][inputs["input_ids"].shape[1] :]
        return self.tokenizer.decode(new_tokens, skip_special_tokens=True)


def create_server_app(engine, served_model: str = "sonolex-adapter") -> FastAPI:
    app = FastAPI(title="sonolex-finetune", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", engine=engine.name, version=__version__)

    @app.post("/chat/completions", response_model=ChatResponse)
    def chat_completions(request: ChatRequest) -> ChatResponse:
        if not request.messages:
            raise HTTPException(422, detail="messages must be non-empty")
        prompt = request.messages[-1].content
        reply = engine.generate(prompt, request.max_tokens, request.temperature)
        return ChatResponse(
            id=f"chatcmpl-{uuid.uuid4().hex[:24]}",
            created=int(time.time()),
            model=request.model or served_model,
            choices=[
                ChatChoice(index=0, message=ChatMessage(role="assistant", content=reply))
            ],
            usage=ChatUsage(
                prompt_tokens=len(prompt.split()),
                completion_tokens=len(reply.split()),
                total_tokens=len(prompt.split()) + len(reply.split()),
            ),
        )

    return app
