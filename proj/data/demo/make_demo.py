#!/usr/bin/env python3
"""Regenerates the synthetic demo corpus and its gold files.

Every line is invented. Therapist lines are drawn from small template pools
whose intended (ps, fac) label is known, so the gold files follow directly.
Run from anywhere; outputs land next to this script.
"""

import csv
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
SEED = 20240611

T = {
    ("PositiveMindset", "None"): [
        "Try to think of this problem as a challenge rather than a threat, and keep a positive attitude about it.",
        "Healthy thinking helps here, so notice the negative thoughts and replace them with positive self talk.",
        "When a strong emotion shows up, use your feelings as a signal that a problem needs attention.",
        "Everyone will make mistakes along the way, and that is part of learning to solve problems.",
        "Some optimism goes a long way, so remind yourself that problems are a normal part of life.",
        "The way you feel about a problem can change how you approach it, so let's start from a hopeful place.",
        "Every problem you solve adds a tool to your toolbox, so keep a positive attitude about the next one.",
    ],
    ("DefineProblemsGoals", "None"): [
        "Let us define the problem in concrete terms before we go further.",
        "What are the facts of the situation, and what exactly is getting in the way?",
        "Can we set a realistic goal for this specific problem over the next week?",
        "Are there any obstacles to those goals that we should write down?",
        "So defining the problem means separating the facts from assumptions about it.",
        "What would a realistic goal look like for the caregiving problem you described?",
        "Tell me about the obstacles that keep getting in the way of your goals.",
    ],
    ("GenerateAlternatives", "None"): [
        "Let's brainstorm some ideas, and remember that quantity leads to quality.",
        "Try to defer judgment for now and just list lots of ideas, even silly ones.",
        "What alternative solutions can you think of for getting more time for yourself?",
        "We could brainstorm strategies and tactics for how to ask your sister for help.",
        "Brainstorming ideas works best when we write down every one without judging it.",
        "How many different ideas can we come up with for handling the evenings?",
        "Let's brainstorm some ideas for ways you could recharge in the evenings.",
    ],
    ("OutcomePredictionPlanning", "None"): [
        "Let's weigh the pros and cons of each idea on the worksheet.",
        "What consequences would each option have for you and for your mother?",
        "Now we can narrow down the list and pick the best solution to try.",
        "How would this affect your time, and how would it affect your energy?",
        "So the action plan is to call the day center on Monday and ask about hours.",
        "Let's make a plan for what you will do if the first step does not work.",
        "Let's weigh the pros and cons so the action plan keeps you on track this month.",
    ],
    ("TryOutSolutionPlan", "None"): [
        "How did it go when you tried it this week?",
        "Keep monitoring the outcomes so we can see if it works over time.",
        "You may need some extra support while trying out the plan, and that is fine.",
        "The effort you put into this plan really shows in the outcomes you described.",
        "Did you notice any change in the problem after trying out the new schedule?",
        "Let's look at how the plan worked and what you would adjust next time you try it.",
        "How did it go when you tried it, step by step, over the week?",
    ],
    ("None", "SocialCourtesies"): [
        "Good morning, it is nice to see you again today.",
        "Thank you so much for your time today, and take care of yourself.",
        "I hope you have a good weekend and the weather stays nice for you.",
        "I look forward to talking with you again soon, thank you.",
        "Thank you for joining me on the call this morning.",
    ],
    ("None", "SessionManagement"): [
        "We have about ten minutes left, so let's schedule our next session.",
        "Next time we are going to talk about the action plan in more detail.",
        "Before we end today, let's see if the same time next week works for you.",
        "Let's see, we still need to go over the homework before we end.",
        "Can we schedule the next session for Thursday afternoon this time?",
        "We will take it step by step, so let's schedule our next session for Monday.",
    ],
    ("None", "TherapeuticEngagement"): [
        "I'm glad you told me about that, it makes sense that you felt tired.",
        "That sounds so hard, and it must have been a long week for you.",
        "You did a great job keeping track of everything this week, I'm proud of you.",
        "It makes sense that you would feel pulled in two directions right now.",
        "That sounds really good, I'm glad the small changes are helping.",
        "It must have been frustrating when the appointment fell through again.",
        "That sounds like a weight off your shoulders, I'm glad your brother is helping.",
        "It makes sense that you feel tired when you are juggling so much at once.",
    ],
    ("None", "TestReview"): [
        "Your scores on the questionnaire showed a strong positive problem orientation.",
        "The rational problem solving score was your highest of the five dimensions.",
        "Your avoidant score was low, which means you tend to face problems directly.",
        "The impulsive style score was a little higher, so we will watch for rushed decisions.",
        "Let's go over your scores on the negative problem orientation scale together.",
    ],
    ("DefineProblemsGoals", "TherapeuticEngagement"): [
        "That sounds so hard, so let's define the problem together and set one realistic goal.",
        "I'm glad you brought that up, because the obstacles you named are getting in the way of your goals.",
    ],
    ("GenerateAlternatives", "TherapeuticEngagement"): [
        "You did a great job with that, so let's brainstorm a few more ideas now.",
    ],
    ("TryOutSolutionPlan", "SessionManagement"): [
        "Next week we will review how it went when you tried it, so keep monitoring the outcomes.",
    ],
    ("None", "None"): [
        "I have invested a lot of time in thinking about this with you.",
        "Okay, so that was on Tuesday and then again on Friday?",
        "Right, and your daughter lives about an hour away from you?",
        "Is that the same doctor you mentioned when we spoke before?",
        "So it sounds like the roadblock was mostly the transportation.",
        "When I was caring for my own father I remember feeling the same way.",
    ],
}

FILLERS = ["Oh good.", "Okay.", "Mm-hmm, right.", "Yeah, I see.", "Sure, sure.", "Oh good"]

CLIENT = [
    "I have been so busy with my mother that I barely sleep.",
    "Yeah, that makes sense.",
    "I guess I could ask my brother, but he never answers.",
    "It went okay, better than I expected actually.",
    "I did not really have time to try it this week.",
    "Mostly the evenings are the hardest part for me.",
    "I feel like I am juggling too many things at once.",
    "Okay.",
    "That sounds good to me.",
    "I wrote a few of them down on the sheet you sent.",
    "The day center is only open until three.",
    "Thursday works for me, same time.",
    "I think I would like to take a walk in the mornings again.",
    "Honestly I just feel worn out.",
]

# Label mix per visit: early visits define problems and review tests,
# later visits move to alternatives, planning and trying out.
VISIT_WEIGHTS = {
    1: {("DefineProblemsGoals", "None"): 6, ("PositiveMindset", "None"): 4, ("None", "TestReview"): 4,
        ("GenerateAlternatives", "None"): 2, ("None", "SocialCourtesies"): 2,
        ("None", "SessionManagement"): 2, ("None", "TherapeuticEngagement"): 4,
        ("DefineProblemsGoals", "TherapeuticEngagement"): 1, ("None", "None"): 2},
    2: {("DefineProblemsGoals", "None"): 2, ("GenerateAlternatives", "None"): 5,
        ("OutcomePredictionPlanning", "None"): 5, ("PositiveMindset", "None"): 1,
        ("None", "SocialCourtesies"): 2, ("None", "SessionManagement"): 2,
        ("None", "TherapeuticEngagement"): 4, ("GenerateAlternatives", "TherapeuticEngagement"): 1,
        ("None", "None"): 2},
    3: {("TryOutSolutionPlan", "None"): 6, ("OutcomePredictionPlanning", "None"): 2,
        ("GenerateAlternatives", "None"): 1, ("DefineProblemsGoals", "None"): 1,
        ("None", "SocialCourtesies"): 2, ("None", "SessionManagement"): 3,
        ("None", "TherapeuticEngagement"): 4, ("TryOutSolutionPlan", "SessionManagement"): 1,
        ("None", "None"): 2},
}

NAMES = {
    "PositiveMindset": "Problem-solving Positive Mindset",
    "DefineProblemsGoals": "Defining Problems and Goals",
    "GenerateAlternatives": "Generating Alternative Solutions",
    "OutcomePredictionPlanning": "Outcome Prediction and Planning",
    "TryOutSolutionPlan": "Trying Out Solution Plan",
    "SocialCourtesies": "Social Courtesies",
    "SessionManagement": "Session Management",
    "TherapeuticEngagement": "Therapeutic Engagement",
    "TestReview": "Test Review",
    "None": "None",
}


def build(rng):
    lines, gold = [], []
    for client in range(1, 5):
        for visit in (1, 2, 3):
            sid = f"c{client:02d}_v{visit}"
            weights = VISIT_WEIGHTS[visit]
            keys = sorted(weights)
            turn = 0
            n_pairs = rng.randint(16, 22)

            def emit(speaker, text):
                nonlocal turn
                lines.append({"session_id": sid, "visit_index": visit, "turn_index": turn,
                              "speaker": speaker, "text": text})
                turn += 1
                return f"{sid}#{turn - 1:04d}"

            emit("therapist", rng.choice(T[("None", "SocialCourtesies")]))
            emit("client", rng.choice(CLIENT))
            for _ in range(n_pairs):
                if rng.random() < 0.15:
                    emit("therapist", rng.choice(FILLERS))
                else:
                    label = rng.choices(keys, [weights[k] for k in keys])[0]
                    uid = emit("therapist", rng.choice(T[label]))
                    gold.append((uid, label))
                emit("client", rng.choice(CLIENT))
            uid = emit("therapist", rng.choice(T[("None", "SessionManagement")]))
            gold.append((uid, ("None", "SessionManagement")))
    return lines, gold


def write_gold(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["utterance_id", "ps_label", "fac_label"])
        for uid, (ps, fac) in rows:
            w.writerow([uid, NAMES[ps], NAMES[fac]])


def main():
    rng = random.Random(SEED)
    lines, gold = build(rng)
    with open(HERE / "corpus.jsonl", "w") as f:
        for obj in lines:
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")

    # Gold covers a fixed random subset, like a held-out evaluation set.
    subset = sorted(rng.sample(gold, 150))
    write_gold(HERE / "gold.csv", subset)

    # A second annotator who disagrees on roughly one item in eight.
    labels = sorted(set(T))
    second = []
    for uid, label in subset:
        if rng.random() < 0.125:
            label = rng.choice([l for l in labels if l != label])
        second.append((uid, label))
    write_gold(HERE / "gold_second.csv", second)


if __name__ == "__main__":
    main()
