"""
Visual descriptors from dialogue
================================

A descriptor is the text we embed on behalf of a dialogue. The cheapest
variant concatenates the turns; the stronger ones ask a chat model to
describe the photo being shared. This walks through the prompt
construction and answer parsing without calling any endpoint.
"""

import json

from photoseek import (
    DescriptorVariant,
    build_prompt,
    default_query_set,
    extra_queries,
    generate_descriptor,
    parse_query_answers,
    render_descriptor,
)
from photoseek.synthetic import token_corpus

corpus = token_corpus(n_photos=4, seed=5)
dialogue = corpus.dialogues[0]

# Variant "dialogue": no model involved, just the turns joined.
descriptor = generate_descriptor(dialogue, DescriptorVariant.DIALOGUE)
print("dialogue variant:", descriptor.text[:88], "...")

# The LLM variants differ only in their prompt. Summary asks for a
# paragraph, guessing asks what the shared photo shows, queries asks a
# fixed battery of questions answered as JSON.
for variant in (DescriptorVariant.SUMMARY, DescriptorVariant.GUESSING):
    prompt = build_prompt(dialogue, variant)
    print(f"\n--- {variant.value} prompt starts with ---")
    print(prompt[:160])

# The query battery: five standard questions, each rendered as a bullet
# the model must answer.
query_set = default_query_set()
prompt = build_prompt(dialogue, DescriptorVariant.QUERIES, query_set=query_set)
print("\n--- queries prompt bullets ---")
for line in prompt.splitlines():
    if line.startswith("- "):
        print(line)

# Ablations drop or add questions. The extras are predefined.
print("\nextra queries available:", sorted(extra_queries()))
smaller = query_set.without("events")
print("without events:", [q.key for q in smaller.queries])

# A model reply is prose around a JSON object. The parser digs the object
# out and validates every key is present.
reply = """Here is what I can tell about the photo:
{"main subject": ["a brown dog"],
 "prominent objects in the foreground": ["a ball", "grass"],
 "background scene": "a fenced yard",
 "events": ["playing fetch"],
 "materials and attributes": ["furry", "green"]}
Hope this helps!"""
answers = parse_query_answers(reply, query_set)
print("\nparsed answers:", json.dumps(answers, indent=2))

# Rendered into the sentence form that actually gets embedded:
print("\nrendered descriptor:")
print(render_descriptor(answers, query_set))
