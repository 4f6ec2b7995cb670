"""Configuration management via pydantic-settings."""
