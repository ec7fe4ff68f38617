"""Role-specific prompt templates.

ROUTER, PROFILER and SELECTOR follow the published routing, profiling and
retrieval-selection prompts. ANNOTATOR, EVOLVER and ANSWERER are authored
here; bump PROMPT_VERSION whenever any template text changes.
"""

PROMPT_VERSION = "1"

ROUTER = """You are a memory routing assistant.

A new memory has arrived:
- Content: {content}
- Context: {context}
- Tags: {tags}

Here are candidate clusters (pre-selected by vector similarity) that might relate to this memory:
{candidates_text}

Your task:
1. Analyze the topics and contexts of the candidate clusters provided above.
2. Select the single cluster_id that exhibits the highest semantic relevance and thematic alignment with the new memory.
3. You MUST choose exactly one cluster_id from the candidate list.

- Do NOT output any text that is not a valid cluster_id.

Return ONLY a JSON object in this format (this is an example):

{{
"choice": "cluster_1"
}}

Where:
- cluster_1 must be replaced with one of the actual cluster ids from the candidate list above.
- Do not include comments or extra fields."""

PROFILER = """You are a memory clustering assistant.

Below are several memory snippets that belong to the SAME cluster:

{samples_text}

Your task:
1. Write ONE short sentence summary that best describes the main topic of this cluster.
2. Return EXACTLY 3 tags.
- Each tag must be a single word.
- Do NOT repeat the same tag.

Return ONLY a JSON object with the following KEYS (this is a schema, not the actual content):

{{
    "summary": "...your one-sentence summary here...",
    "tags": ["tag_1", "tag_2", "tag_3"]
}}"""

SELECTOR = """You are an AI memory router that selects the most relevant memory clusters for a given query.

You will be given several candidate clusters. Each cluster has:
- cluster_id
- one-sentence summary
- optional tags
- one or more representative memory examples

Your task:
1. Analyze the user query and query_tags.
2. For each candidate cluster, judge how relevant it is.
3. Decide how many clusters are actually needed. You should return between 0 and {top_n} clusters.
- If one cluster is definitely sufficient for answering the query, return just that one.
- Include additional clusters if they are needed for answering the query.
4. If none of the clusters are meaningfully related, return an empty list.

Return ONLY JSON with this format:
{{
  "selected_clusters": ["cluster_id_1", "cluster_id_2"]
}}

If no cluster is relevant, return:
{{
  "selected_clusters": []
}}

User query: {query}
Query tags: {query_tags}

Candidate clusters:
{candidate_clusters_text}"""

ANNOTATOR = """You are a memory annotation assistant.

Read the memory below and describe it for later retrieval.

Memory: {content}

Return ONLY a JSON object with these keys:
{{
  "keywords": ["3 to 5 short lowercase keywords naming the salient concepts"],
  "tags": ["1 to 3 short lowercase category tags"],
  "context": "one sentence describing what this memory is about"
}}"""

EVOLVER = """You are a memory evolution assistant.

A new memory was added to a topic cluster:
{new_note_text}

Related memories from the same cluster:
{neighbors_text}

Your task:
1. List the ids of related memories that the new memory should link to (causal, temporal or topical relations).
2. For any related memory whose context, tags or keywords should change in light of the new memory, give the revised fields. Leave out memories that need no change.

Return ONLY a JSON object in this format:
{{
  "links": ["note_3"],
  "revisions": [
    {{"id": "note_3", "context": "revised one-sentence context", "tags": ["tag"], "keywords": ["keyword"]}}
  ]
}}"""

ANSWERER = """You are a helpful assistant answering questions from stored memories.

Memories:
{memories_text}

Question: {question}

Answer the question in a few words using only the memories above. If the memories do not contain the answer, reply "unknown"."""


def cluster_block(cluster_id, summary, tags, snippets) -> str:
    lines = [f"- cluster_{cluster_id}", f"  Summary: {summary}", f"  Tags: {', '.join(tags)}", "  Examples:"]
    lines += [f"    * {s}" for s in snippets]
    return "\n".join(lines)


def note_block(note) -> str:
    return (
        f"- note_{note.id}: {note.content}\n"
        f"  Context: {note.context}\n"
        f"  Tags: {', '.join(note.tags)}\n"
        f"  Keywords: {', '.join(note.keywords)}"
    )
