#!/usr/bin/env python3
"""Regenerates persian_corpus.txt: seeded synthetic Persian sentences.

Sentences are drawn from a stem lexicon with common inflections, and a share of
them carry the raw-text noise that normalization has to undo (Arabic yeh/kaf,
harakat, tatweel, punctuation, Eastern digits).
"""

import random

NOUNS = """
کتاب خانه مدرسه دانشگاه شهر کشور دریا کوه آسمان زمین خورشید ماه ستاره باران
برف باد درخت گل باغ میوه سیب انار نان آب چای قهوه غذا سفره میز صندلی پنجره در
دیوار اتاق خیابان کوچه بازار مغازه پول کار کارگر معلم دانشجو پزشک بیمار بیمارستان
دوست برادر خواهر پدر مادر فرزند کودک مرد زن مردم دولت مجلس وزیر رئیس شرکت
خبر روزنامه رادیو تلویزیون فیلم موسیقی ترانه شعر داستان زبان فرهنگ تاریخ هنر
علم دانش فکر سخن حرف صدا گوش چشم دست پا سر دل جان زندگی مرگ عشق امید ترس
شادی غم روز شب صبح عصر هفته سال قرن وقت ساعت لحظه راه سفر قطار هواپیما ماشین
ایستگاه فرودگاه جاده پل رود جنگل صحرا مزرعه کشاورز گندم برنج گوشت مرغ ماهی
""".split()

VERB_STEMS = [
    ("رفت", "رو"), ("آمد", "آی"), ("گفت", "گوی"), ("دید", "بین"), ("خورد", "خور"),
    ("نوشت", "نویس"), ("خواند", "خوان"), ("شنید", "شنو"), ("کرد", "کن"), ("داد", "ده"),
    ("گرفت", "گیر"), ("ساخت", "ساز"), ("دانست", "دان"), ("خرید", "خر"), ("فروخت", "فروش"),
    ("نشست", "نشین"), ("خوابید", "خواب"), ("پرسید", "پرس"), ("شست", "شوی"), ("پخت", "پز"),
    ("برد", "بر"), ("آورد", "آور"), ("زد", "زن"), ("بست", "بند"), ("شکست", "شکن"),
]

ADJECTIVES = """
بزرگ کوچک خوب بد زیبا زشت تازه کهنه سرد گرم بلند کوتاه سبز سرخ سفید سیاه
آرام شلوغ ساده سخت دور نزدیک جوان پیر شاد غمگین روشن تاریک مهربان دانا
""".split()

FUNCTION = """
و در به از با که این آن را هم تا برای اما یا نه بسیار همه هر چند هیچ
""".split()

PAST_ENDINGS = ["م", "ی", "", "یم", "ید", "ند"]
PRESENT_ENDINGS = ["م", "ی", "د", "یم", "ید", "ند"]
NOUN_SUFFIXES = ["", "", "", "ها", "ی", "ش", "م", "مان", "هایی", "های"]
ADJ_SUFFIXES = ["", "", "تر", "ترین"]
ZWNJ = "‌"


def noun(rng):
    n = rng.choice(NOUNS)
    s = rng.choice(NOUN_SUFFIXES)
    if s.startswith("ها") and rng.random() < 0.5:
        return n + ZWNJ + s
    return n + s


def verb(rng):
    past, present = rng.choice(VERB_STEMS)
    if rng.random() < 0.5:
        prefix = rng.choice(["", "ن"])
        return prefix + past + rng.choice(PAST_ENDINGS)
    prefix = rng.choice(["می" + ZWNJ, "نمی" + ZWNJ, "ب"])
    return prefix + present + rng.choice(PRESENT_ENDINGS)


def adjective(rng):
    return rng.choice(ADJECTIVES) + rng.choice(ADJ_SUFFIXES)


def sentence(rng):
    words = []
    for _ in range(rng.randint(2, 4)):
        words.append(noun(rng))
        if rng.random() < 0.4:
            words.append(adjective(rng))
        if rng.random() < 0.5:
            words.append(rng.choice(FUNCTION))
    words.append(verb(rng))
    return words


def add_noise(words, rng):
    out = []
    for w in words:
        if rng.random() < 0.08:
            w = w.replace("ی", "ي")
        if rng.random() < 0.08:
            w = w.replace("ک", "ك")
        if rng.random() < 0.03 and len(w) > 2:
            w = w[0] + "َ" + w[1:]
        if rng.random() < 0.02 and len(w) > 2:
            w = w[:2] + "ـ" + w[2:]
        out.append(w)
    if rng.random() < 0.05:
        out.insert(rng.randrange(len(out) + 1), "".join(rng.choice("۰۱۲۳۴۵۶۷۸۹") for _ in range(rng.randint(1, 4))))
    text = " ".join(out)
    r = rng.random()
    if r < 0.25:
        text += "."
    elif r < 0.35:
        text += "؟"
    if rng.random() < 0.2:
        i = text.find(" ")
        if i > 0:
            text = text[:i] + "،" + text[i:]
    return text


def main():
    rng = random.Random(20240521)
    with open("persian_corpus.txt", "w", encoding="utf-8") as f:
        for _ in range(1500):
            f.write(add_noise(sentence(rng), rng) + "\n")


if __name__ == "__main__":
    main()
