"""Toolkit for building GUI-agent training data from app page graphs.

Pages are parsed into aligned action spaces, random walks become task
flows, flows are split into subtasks, actions get four-level rewards that
feed preference pairs, and a small hashed-feature policy can be trained
with supervised or preference objectives and evaluated in a replay
environment.
"""

__version__ = "0.1.0"
