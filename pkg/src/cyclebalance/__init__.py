"""Imbalanced binary image classification with translation-GAN augmentation."""

__version__ = "0.1.0"
