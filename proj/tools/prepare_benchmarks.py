#!/usr/bin/env python3
"""Convert the raw German credit, COMPAS and Adult files into loader-ready CSVs.

Each dataset is written as <name>.csv plus <name>.schema.json. Categorical
columns keep their symbolic values; the C++ loader dummy-encodes them.

Raw inputs (supplied by the user):
  german.data                  https://archive.ics.uci.edu/ml/datasets/statlog+(german+credit+data)
  compas-scores-two-years.csv  https://github.com/propublica/compas-analysis
  adult.data, adult.test       https://archive.ics.uci.edu/ml/datasets/Adult
"""
import argparse
import csv
import json
import os
import sys


def write(out_dir, name, header, rows, schema):
    with open(os.path.join(out_dir, name + ".csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    with open(os.path.join(out_dir, name + ".schema.json"), "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")
    print(f"{name}: {len(rows)} rows, {len(header)} columns", file=sys.stderr)


def german(raw_dir, out_dir):
    # Attribute codes follow german.doc; A13 (age) becomes the protected flag.
    names = ["checking", "duration", "history", "purpose", "amount", "savings",
             "employment", "installment_rate", "personal_status", "debtors",
             "residence_since", "property", "age", "other_plans", "housing",
             "existing_credits", "job", "liable", "telephone", "foreign"]
    numeric = {"duration", "amount", "installment_rate", "residence_since",
               "existing_credits", "liable"}
    rows = []
    with open(os.path.join(raw_dir, "german.data")) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            rec = dict(zip(names, parts[:20]))
            out = [rec[n] for n in names if n != "age"]
            out.append("1" if int(rec["age"]) > 25 else "0")
            out.append("1" if parts[20] == "1" else "0")
            rows.append(out)
    header = [n for n in names if n != "age"] + ["age_over_25", "good_credit"]
    schema = {}
    for n in header[:-2]:
        schema[n] = {"role": "feature", "categorical": n not in numeric}
    schema["age_over_25"] = {"role": "protected", "categorical": False}
    schema["good_credit"] = {"role": "outcome", "categorical": False}
    write(out_dir, "german", header, rows, schema)


def compas(raw_dir, out_dir):
    keep = ["age", "age_cat", "sex", "priors_count", "c_charge_degree",
            "juv_fel_count", "juv_misd_count", "juv_other_count"]
    rows = []
    with open(os.path.join(raw_dir, "compas-scores-two-years.csv"), newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        idx = {}
        for i, h in enumerate(header):
            idx.setdefault(h, i)
        for rec in reader:
            get = lambda k: rec[idx[k]]
            # ProPublica's filtering of unreliable screenings.
            days = get("days_b_screening_arrest")
            if days == "" or abs(int(days)) > 30:
                continue
            if get("is_recid") == "-1" or get("c_charge_degree") == "O":
                continue
            if get("score_text") == "N/A":
                continue
            out = [get(k) for k in keep]
            out.append("1" if get("race") == "African-American" else "0")
            out.append(get("two_year_recid"))
            rows.append(out)
    header = keep + ["african_american", "two_year_recid"]
    categorical = {"age_cat", "sex", "c_charge_degree"}
    schema = {k: {"role": "feature", "categorical": k in categorical} for k in keep}
    schema["african_american"] = {"role": "protected", "categorical": False}
    schema["two_year_recid"] = {"role": "outcome", "categorical": False}
    write(out_dir, "compas", header, rows, schema)


def adult(raw_dir, out_dir):
    names = ["age", "workclass", "fnlwgt", "education", "education_num",
             "marital_status", "occupation", "relationship", "race", "sex",
             "capital_gain", "capital_loss", "hours_per_week", "native_country"]
    numeric = {"age", "fnlwgt", "education_num", "capital_gain", "capital_loss",
               "hours_per_week"}
    rows = []
    for fname in ("adult.data", "adult.test"):
        with open(os.path.join(raw_dir, fname)) as f:
            for line in f:
                parts = [p.strip() for p in line.strip().split(",")]
                if len(parts) != 15 or "?" in parts:
                    continue
                rec = dict(zip(names, parts[:14]))
                out = [rec[n] for n in names if n != "sex"]
                out.append("1" if rec["sex"] == "Male" else "0")
                out.append("1" if parts[14].rstrip(".") == ">50K" else "0")
                rows.append(out)
    header = [n for n in names if n != "sex"] + ["male", "income_over_50k"]
    schema = {n: {"role": "feature", "categorical": n not in numeric}
              for n in header[:-2]}
    schema["male"] = {"role": "protected", "categorical": False}
    schema["income_over_50k"] = {"role": "outcome", "categorical": False}
    write(out_dir, "adult", header, rows, schema)


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--raw", required=True, help="directory holding the raw files")
    ap.add_argument("--out", required=True, help="output directory")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    german(args.raw, args.out)
    compas(args.raw, args.out)
    adult(args.raw, args.out)


if __name__ == "__main__":
    main()
