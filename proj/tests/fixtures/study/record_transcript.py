# Drives a running `wordlens study --config config.json --out-dir data --port 18765` through
# two complete participants. Answers follow fixed position rules, so the counts are easy to check.
import json, urllib.request
base="http://127.0.0.1:18765"
cfg=json.load(open("config.json"))
truth={t["id"]:t["label"] for t in cfg["test_ids"]}
def call(method, path, body=None):
    req=urllib.request.Request(base+path, method=method, data=None if body is None else json.dumps(body).encode(), headers={"Content-Type":"application/json"})
    try:
        with urllib.request.urlopen(req) as r: return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e: return e.code, json.loads(e.read())
st, res = call("POST","/studies",cfg); print(st,res)
sid=res["study_id"]
rules={"p1":("degree", lambda k: k%3!=0, lambda k: k%5!=0),
       "p2":("no_degree", lambda k: k%2==0, lambda k: k%4!=3)}
for pid,(grp,r1,r2) in rules.items():
    st,s=call("POST",f"/studies/{sid}/sessions",{"participant_id":pid,"education_group":grp}); print(st,s)
    sess=s["session_id"]
    for phase,rule in (("SESSION_1",r1),("SESSION_2",r2)):
        for k in range(50):
            st,item=call("GET",f"/sessions/{sess}/next"); assert st==200 and item["phase"]==phase, (st,item)
            img=item["image_id"]
            choice = truth[img] if rule(k) else 1-truth[img]
            st,ack=call("POST",f"/sessions/{sess}/responses",{"image_id":img,"choice":choice}); assert st==200,(st,ack)
    st,item=call("GET",f"/sessions/{sess}/next"); print("after:",st,item)
print(call("GET",f"/studies/{sid}/summary")[0])
