"""Desk-scale video-detection harness: synthetic data, tiny SSD-style
detector with optional entropy attention and recurrent hidden state,
trainer, mAP evaluation and the placement-ablation runner."""
