"""Near-field, far-field and reference assembly of the discrete single-layer operator."""
