"""Run orchestration: instances, configuration, backends, pipeline, CLI."""
