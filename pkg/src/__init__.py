# Synthetic emotion-feature generation with GANs
