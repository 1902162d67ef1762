"""Recurrent encoder-decoder OCR for binary word images."""
