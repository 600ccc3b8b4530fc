"""Fine-tuning recipe for the report-extraction task: consumes the
pipeline's instruction dataset files, trains low-rank adapters over a
quantized base model, and serves the result behind a chat-completions
endpoint."""

__version__ = "0.1.0"
