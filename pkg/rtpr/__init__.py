"""
rtpr: robust process regression for batches of curves.

Latent curves follow a Gaussian or extended t-process and every curve carries
its own independent extended-t-process error, so a curve with gross errors
is downweighted through its own random effect instead of disturbing the rest
of the batch.

```python
import rtpr

print(rtpr.__version__)
```
"""
__version__ = "0.1.0"
