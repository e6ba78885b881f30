#!/usr/bin/env python3
# Regenerates the cert-mini fixture. Output is fixed by the seed.
import random

random.seed(7)

USERS = [
    ("Ava Brooks", "ABR0101", "ava.brooks@dtaa.com", "Engineer", "Engineering", "Moderate"),
    ("Ben Cole", "BCO0202", "ben.cole@dtaa.com", "Accountant", "Finance", "Low"),
    ("Cara Diaz", "CDI0303", "cara.diaz@dtaa.com", "IT Admin", "IT", "High"),
    ("Dan Ellis", "DEL0404", "dan.ellis@dtaa.com", "Salesperson", "Sales", "Low"),
    ("Eve Frost", "EFR0505", "eve.frost@dtaa.com", "Engineer", "Engineering", "Moderate"),
    ("Finn Gray", "FGR0606", "finn.gray@dtaa.com", "Contractor", "Finance", "Guest"),
]
DOCS = ["status.doc", "design.doc", "minutes.doc", "plan.pdf", "notes.txt", "roadmap.pdf"]

seq = 0


def nid(prefix):
    global seq
    seq += 1
    return "{%s%05d-%04X}" % (prefix, seq, random.randrange(65536))


def ts(day, s):
    return "01/%02d/2010 %02d:%02d:%02d" % (day, s // 3600, (s % 3600) // 60, s % 60)


logon, device, files = [], [], []

with open("users.csv", "w") as f:
    f.write("employee_name,user_id,email,role,department,privilege\n")
    for u in USERS:
        f.write(",".join(u) + "\n")
with open("devices.csv", "w") as f:
    f.write("device_id,trust,owner\n")
    for i, u in enumerate(USERS):
        f.write(f"PC-{1000 + i},ManagedCompliant,{u[1]}\n")

for day in (4, 5, 6):
    for i, u in enumerate(USERS):
        uid, pc = u[1], f"PC-{1000 + i}"
        t = random.randint(8 * 3600, 9 * 3600)
        logon.append((t, day, nid("L"), uid, pc, "Logon"))
        for _ in range(random.randint(3, 7)):
            t += random.randint(60, 900)
            files.append((t, day, nid("F"), uid, pc, random.choice(DOCS), "routine update to the shared document"))
        if i == 0:
            t += 300
            device.append((t, day, nid("D"), uid, pc, "Connect"))
            t += 600
            device.append((t, day, nid("D"), uid, pc, "Disconnect"))
        t += random.randint(300, 1200)
        logon.append((t, day, nid("L"), uid, pc, "Logoff"))

# Late-night session on an unregistered laptop copying sensitive files to USB.
uid, pc, day = "FGR0606", "PC-9999", 5
t = 23 * 3600
logon.append((t, day, nid("L"), uid, pc, "Logon"))
t += 60
device.append((t, day, nid("D"), uid, pc, "Connect"))
SENSITIVE = [
    ("payroll_2010.xls", "employee ssn 219-09-9999 and salary table"),
    ("customers.csv", "card number 4111 1111 1111 1111 exp 12/12"),
    ("patient_notes.doc", "patient MRN:00123456 diagnosis E11.9"),
    ("hr_personnel.doc", "personnel review contact hr@dtaa.com"),
]
for k in range(40):
    t += 35
    name, content = SENSITIVE[k % len(SENSITIVE)]
    files.append((t, day, nid("F"), uid, pc, name, content))
t += 60
device.append((t, day, nid("D"), uid, pc, "Disconnect"))
t += 60
logon.append((t, day, nid("L"), uid, pc, "Logoff"))


def dump(path, header, rows, extra=()):
    rows = sorted(rows, key=lambda r: (r[1], r[0]))
    with open(path, "w") as f:
        f.write(header + "\n")
        for r in rows:
            f.write(",".join([r[2], ts(r[1], r[0])] + list(r[3:])) + "\n")
        for e in extra:
            f.write(e + "\n")


# Three bad rows at the tail: unparseable date, unknown verb, replayed id.
last = sorted(logon, key=lambda r: (r[1], r[0]))[-1]
dump("logon.csv", "id,date,user,pc,activity", logon, [
    "{BAD00001-0000},13/45/2010 99:00:00,ABR0101,PC-1000,Logon",
    "{BAD00002-0000},01/06/2010 23:59:00,ABR0101,PC-1000,Teleport",
    ",".join([last[2], ts(last[1], last[0])] + list(last[3:])),
])
dump("device.csv", "id,date,user,pc,activity", device)
dump("file.csv", "id,date,user,pc,filename,content", files)
