"""Multi-teacher policy advice for average-reward tabular MDPs."""
