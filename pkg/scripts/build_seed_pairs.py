"""Regenerate the bundled handcrafted email/JSON seed pairs.

Every intent of the catalog gets five emails. Sentences are hand-written per
intent; values come from the same fakers the synthetic pipeline uses, so all
values occur verbatim in their email. About a third of the emails carry a
second instance (sometimes of the same intent).

    python scripts/build_seed_pairs.py [--out src/slotjson/data/seed_pairs.jsonl]
"""
import argparse
import random
from pathlib import Path

from slotjson.core import Extraction, IntentInstance, TaskInput, TaskRecord, save_records
from slotjson.synth import fake_value, load_catalog

SENTENCES = {
    "Order > Cancel": [
        "Please cancel order {order_number}, we no longer need it.",
        "Could you cancel our order {order_number} before it ships?",
    ],
    "Order > Status": [
        "Can you tell me where order {order_number} is at the moment?",
        "Any update on the status of order {order_number}?",
    ],
    "Order > Date Change": [
        "We need order {order_number} delivered on {new_date} instead.",
        "Please move the delivery of {order_number} to {new_date}.",
    ],
    "Order > Amendment > Remove Item": [
        "Please remove product {product_id} from order {order_number}.",
        "On order {order_number}, drop item {product_id} entirely.",
    ],
    "Order > Amendment > Reduce Quantity By": [
        "Reduce {product_id} on order {order_number} by {quantity} units.",
        "For order {order_number} we need {quantity} fewer of {product_id}.",
    ],
    "Order > Amendment > Increase Quantity By": [
        "Please add {quantity} more of {product_id} to order {order_number}.",
        "Increase {product_id} by {quantity} on order {order_number}.",
    ],
    "Order > Amendment > Change Quantity To": [
        "Change the quantity of {product_id} on {order_number} to {quantity}.",
        "Order {order_number}: set {product_id} to {quantity} units.",
    ],
    "Order > Amendment > Pricing": [
        "The price for {product_id} on order {order_number} should be {new_price}.",
        "Please reprice {product_id} at {new_price} on order {order_number}.",
    ],
    "Order > Shortage": [
        "Order {order_number} arrived short of {quantity} units of {product_id}.",
        "We were missing {quantity} x {product_id} from order {order_number}.",
    ],
    "Payroll > Correction > Cancel": [
        "Please void check {check_number} for {employee_name} ({amount}) dated {date}.",
        "Cancel the {date} payment of {amount} to {employee_name}, check {check_number}.",
    ],
    "Payroll > Correction > Amount": [
        "{employee_name} should have been paid {amount} on {date}.",
        "Correct the {date} pay for {employee_name} to {amount}.",
    ],
    "Payroll > Employee > Add": [
        "Please add {employee_name} to the payroll from next cycle.",
        "We have a new starter, {employee_name}, who needs setting up.",
    ],
    "Payroll > Employee > Remove": [
        "{employee_name} has left, please remove them from payroll.",
        "Kindly take {employee_name} off the payroll.",
    ],
    "Policy > Cancel": [
        "I want to cancel policy {policy_number} effective {effective_date}.",
        "Please end policy {policy_number} as of {effective_date}.",
    ],
    "Policy > Change Name": [
        "Policy {policy_number} should be under the name {new_name} from {effective_date}.",
        "Please update the holder of {policy_number} to {new_name}, effective {effective_date}.",
    ],
    "Policy > Change Address": [
        "From {effective_date} my address for policy {policy_number} is {new_address}.",
        "Please change the address on {policy_number} to {new_address} effective {effective_date}.",
    ],
    "Product > Availability": [
        "Is {product_id} available in size {size}?",
        "Do you have {product_id} in stock in a {size}?",
    ],
    "Product > Measurements": [
        "What are the measurements of {product_id} in size {size}?",
        "Could you send the size {size} dimensions for {product_id}?",
    ],
    "Return > Label": [
        "I need a return label for return {return_id}.",
        "Please email me the label for return {return_id}.",
    ],
    "Return > Reschedule Pickup": [
        "Can the pickup for return {return_id} be moved to {new_date}?",
        "Please reschedule collection of {return_id} to {new_date}.",
    ],
}
GREETINGS = ["Hi,", "Hello team,", "Good morning,", "Dear support,", "Hi there,"]
SIGNOFFS = ["Thanks", "Best regards", "Many thanks", "Cheers", "Kind regards"]


def build(seed: int = 20230301, per_intent: int = 5) -> list[TaskRecord]:
    rng = random.Random(seed)
    catalog = load_catalog()
    records = []
    for n in range(per_intent * len(catalog)):
        intents = [catalog.schemas[n % len(catalog)]]
        if rng.random() < 0.35:
            intents.append(intents[0] if rng.random() < 0.5 else rng.choice(catalog.schemas))
        instances, lines = [], []
        for intent, ents in intents:
            values = {e.key: fake_value(e, rng) for e in ents}
            lines.append(rng.choice(SENTENCES[intent.display]).format(**values))
            instances.append(IntentInstance(intent, tuple(values.items())))
        message = "\n\n".join([rng.choice(GREETINGS), " ".join(lines), rng.choice(SIGNOFFS)])
        requested = {}
        for intent, ents in intents:
            requested.setdefault(intent, ents)
        records.append(TaskRecord(TaskInput(message, tuple(requested.items())), Extraction(tuple(instances)), f"seed-{n:03d}"))
    return records


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src" / "slotjson" / "data" / "seed_pairs.jsonl"
    ap.add_argument("--out", default=str(default))
    args = ap.parse_args()
    print(save_records(args.out, build()), "seed pairs written to", args.out)
