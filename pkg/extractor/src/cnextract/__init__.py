"""Produce class-name embeddings and frozen image features in the toolkit's
CMVEC/CSV wire formats."""
