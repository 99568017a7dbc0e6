"""Active-shooter evacuation simulator with a from-scratch PPO shooter agent."""

__version__ = "0.1.0"
