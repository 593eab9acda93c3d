"""
Running the perceptual study service end to end
===============================================

Starts the rating service on an ephemeral port, simulates two participants
completing all eight pages (believability muted first, then coordination),
and prints the descriptive statistics and repeated-measures comparison.
"""

import json
import threading
import urllib.request

import numpy as np

from nvbgen.study import RecordStore, StudyConfig, analyze_records, format_analysis
from nvbgen.study_service import serve

sequences = ("seq1", "seq2", "seq3", "seq4")
conditions = ("GTS", "m1", "m2", "m3")
uris = {
    (criterion, sequence, condition): f"/videos/{criterion}_{sequence}_{condition}.mp4"
    for criterion in ("believability", "coordination")
    for sequence in sequences
    for condition in conditions
}
config = StudyConfig(sequences=sequences, conditions=conditions, video_uris=uris)

records_path = "runs/demo_records.jsonl"
open(records_path, "w").close()  # fresh store for the demo
server = serve(config, records_path, port=0, seed=42)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_address[1]}"
print(f"service listening on {base}")


def post(url, payload):
    request = urllib.request.Request(url, data=json.dumps(payload).encode(), method="POST")
    with urllib.request.urlopen(request) as response:
        return json.loads(response.read())


rng = np.random.default_rng(1)
bias = {"GTS": 45, "m1": 55, "m2": 50, "m3": 35}  # simulated participant taste
for participant in ("alice", "bob"):
    page = post(f"{base}/api/sessions", {"participant_id": participant})["page"]
    while page is not None:
        ratings = [
            {"condition": video["condition"],
             "score": int(np.clip(bias[video["condition"]] + rng.integers(-8, 9), 0, 100))}
            for video in page["videos"]
        ]
        result = post(f"{base}/api/sessions/{participant}/ratings",
                      {"page_index": page["page_index"], "ratings": ratings})
        page = result["page"]
    print(f"{participant}: session complete")

server.shutdown()
records = RecordStore(records_path).read_all()
print(f"{len(records)} rating records persisted")
print(format_analysis(analyze_records(records, total_records_per_session=32)))
