"""Settings package: experiment configuration and plugin resolution."""
