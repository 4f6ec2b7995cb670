"""Run orchestration for the command-line front end."""
