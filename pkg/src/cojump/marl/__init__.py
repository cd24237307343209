"""Multi-agent PPO with per-agent actors and centralized critics, in numpy."""
