"""Monte Carlo simulation under solved equilibrium policies."""
