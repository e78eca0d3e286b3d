"""HTTP service layer: FastAPI app plus its pydantic request/response models."""
