"""
Screening careless respondents
==============================

A simulated crowd-worker survey in which a fraction of the respondents
answer at random. Genuine respondents reproduce the instructed answers to
the test items and confirm they paid attention; random responders rarely
manage all of that by chance.
"""

import io

import numpy as np

from mcms.ingest import SpamRules, apply_spam_filter, parse_responses
from mcms.scale import builtin_mcms
from mcms.simulate import mcms_config, simulate_responses

scale = builtin_mcms()
cfg = mcms_config(900, groups=("USA", "IND"), seed=1, mode="likert", spam_fraction=0.3)
data = simulate_responses(cfg)

###############################################################################
# The simulator writes the same CSV layout the ingest stage reads.

text = data.write(scale)
print(text.splitlines()[0])
records = parse_responses(io.StringIO(text), scale)
print(len(records), "records parsed")

###############################################################################
# Apply the rules. A record survives only if every test item matches its
# instructed answer and the attention question is answered "Yes".

rules = SpamRules(data.test_items)
clean, rejected, summary = apply_spam_filter(records, rules)
for g, tally in summary.per_group.items():
    print(f"{g}: {tally.n_raw} raw, {tally.n_clean} clean, spam rate {tally.spam_rate:.1%}")

###############################################################################
# How often does a random responder slip through? With three 7-point test
# items and a 3-option attention check the chance is 1 / (7**3 * 3).

print("chance pass probability", rules.random_pass_probability(7))
truth = np.concatenate([data.is_spam[g] for g in data.matrices])
print("planted spam fraction", truth.mean())
