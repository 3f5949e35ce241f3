"""Power allocation toolkit for fixed-gain amplify-and-forward relay networks.

Subpackages:
    specfun    -- incomplete-gamma / exponential-integral / Q-function kernels
    channel    -- system parameters, fading statistics, channel sampling
    objective  -- instantaneous, averaged and hybrid end-to-end SNR forms
    alloc_ap   -- all-participate allocators (SNR max and power min)
    alloc_sel  -- selective-relay allocators
    verify     -- brute-force oracles and curvature/inequality checks
    sim        -- Monte Carlo sweep engine (SER, throughput, energy, shape)
    cli        -- command-line front end
"""

__version__ = "0.1.0"
