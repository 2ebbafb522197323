# %% [markdown]
# # Publishing with commitments
#
# Alice runs a news site. Each time she publishes she commits her articles
# to a notary, and anyone holding one of her commitments can later check
# it against the notary's chain. Bob is a reader who does exactly that.

# %%
from synchronic import (
    Ledger,
    LedgerState,
    Notary,
    NotaryConfig,
    WindowSpec,
    keygen,
    verify_history,
    verify_single,
)

notary = Notary(NotaryConfig("notary-0", keygen(b"demo-notary")))
alice = Ledger(LedgerState(keygen(b"alice"), "https://alice.example/"), notary)
print("open index:", notary.current_index())

# %% [markdown]
# One cycle: Alice submits at the open index, the notary seals the block,
# and Alice fetches her proof. Here we seal by hand instead of waiting on a timer.

# %%
articles = {
    "politics/budget.html": b"The budget passed on Tuesday.",
    "science/comet.html": b"A comet will be visible next week.",
    "sport/final.html": b"The final ended 2-1.",
}


def seal(index):
    while notary.current_index() <= index:
        notary.seal_block()


commitments = alice.commit_cycle(articles, 1, wait=seal)
for path, c in commitments.items():
    print(path, "sequence", c.envelope.sequence, "global key", c.global_key.hex()[:16])

# %% [markdown]
# Bob receives the budget article and its commitment and checks both.

# %%
c = commitments["politics/budget.html"]
report = verify_single(c, notary, content=articles["politics/budget.html"])
print(report.render())

# %% [markdown]
# A doctored copy of the article fails the content check.

# %%
print(verify_single(c, notary, content=b"The budget failed on Tuesday.").render())

# %% [markdown]
# Alice keeps revising the budget article. Bob asks for her history over
# indices 1..10 and accepts it only if she committed at a majority of them
# with contiguous sequence numbers.

# %%
history = [c]
for index in range(2, 7):
    revision = {"politics/budget.html": b"The budget passed on Tuesday. Update %d." % index}
    history.append(alice.commit_cycle(revision, index, wait=seal)["politics/budget.html"])

window = WindowSpec(1, 10)
print(verify_history(history, window, notary).render())
print()
print(verify_history(history[:5], window, notary).render())
