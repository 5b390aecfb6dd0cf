"""trustloop: raise a classifier's trustworthiness during inference.

Machine agents score each prediction's trust, flag overconfident
anomalies by rule, obtain human labels for them, augment and retrain with
warm-started weights, and promote the new model only when its net trust
score improves.  A harness compares this agent loop against a
random-labeling baseline on corrupted image streams.
"""

__version__ = "0.1.0"
