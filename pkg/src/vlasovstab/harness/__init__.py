"""Configuration, experiment driver, artifact writers and the command line."""
