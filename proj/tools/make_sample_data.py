#!/usr/bin/env python3
# Copyright 2026 The mdlm Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the small bundled corpora under data/.

The corpora are template-generated so they are tiny, license-free and
reproducible. English and Turkish use disjoint vocabularies and character
statistics, which is what the continual-pretraining experiments rely on.
"""

import argparse
import pathlib
import random

EN_SUBJ = ["the cat", "a dog", "my friend", "the old man", "our teacher", "the little girl", "a farmer",
           "the doctor", "his brother", "the bird", "a young boy", "the king"]
EN_VERB = ["walks to", "looks at", "runs past", "waits near", "sings for", "reads about", "thinks about",
           "draws", "finds", "visits", "watches", "likes"]
EN_OBJ = ["the river", "a green house", "the market", "the garden", "a red apple", "the big city",
          "the school", "a quiet forest", "the blue sea", "an old book", "the bright moon", "the small bridge"]
EN_TAIL = ["every morning", "in the evening", "with a smile", "after lunch", "on sunday", "before dinner",
           "in the rain", "all day long"]

TR_SUBJ = ["kedi", "küçük çocuk", "yaşlı adam", "öğretmenimiz", "genç kız", "çiftçi", "doktor", "kardeşim",
           "kuş", "komşumuz", "öğrenci", "balıkçı"]
TR_OBJ = ["nehre", "pazara", "bahçeye", "okula", "denize", "ormana", "şehre", "köprüye", "eve", "parka",
          "kütüphaneye", "çarşıya"]
TR_VERB = ["gidiyor", "koşuyor", "bakıyor", "yürüyor", "dönüyor", "uçuyor", "geliyor", "çıkıyor"]
TR_TIME = ["her sabah", "akşamüstü", "öğleden sonra", "pazar günü", "yağmurda", "gün boyunca",
           "sabah erkenden", "güneş batarken"]
TR_ADJ = ["çok güzel", "sıcak", "soğuk", "güneşli", "sessiz", "kalabalık", "yeşil", "büyük"]
TR_NOUN = ["hava", "şehir", "deniz", "orman", "köy", "bahçe", "nehir", "dağ"]

WIKI_TOPICS = [("ankara", "türkiye'nin başkentidir"), ("istanbul", "türkiye'nin en kalabalık şehridir"),
               ("fotosentez", "bitkilerin güneş ışığıyla besin üretmesidir"),
               ("kızılırmak", "türkiye'nin en uzun nehridir"), ("ağrı dağı", "türkiye'nin en yüksek dağıdır"),
               ("van gölü", "türkiye'nin en büyük gölüdür"), ("güneş", "dünyaya en yakın yıldızdır"),
               ("su", "hidrojen ve oksijenden oluşur"), ("ay", "dünyanın tek doğal uydusudur"),
               ("kapadokya", "peri bacalarıyla ünlüdür")]
WIKI_EXTRA = ["bu bilgi ansiklopedide yer alır.", "konu okullarda öğretilir.", "birçok kaynakta geçer.",
              "bu konuda çok kitap yazılmıştır.", "tarihi çok eskidir."]


def en_sentence(rng):
    return f"{rng.choice(EN_SUBJ)} {rng.choice(EN_VERB)} {rng.choice(EN_OBJ)} {rng.choice(EN_TAIL)}."


def tr_sentence(rng):
    kind = rng.random()
    if kind < 0.5:
        return f"{rng.choice(TR_SUBJ)} {rng.choice(TR_TIME)} {rng.choice(TR_OBJ)} {rng.choice(TR_VERB)}."
    return f"bugün {rng.choice(TR_NOUN)} {rng.choice(TR_ADJ)} ve {rng.choice(TR_SUBJ)} {rng.choice(TR_OBJ)} {rng.choice(TR_VERB)}."


def wiki_sentence(rng):
    topic, fact = rng.choice(WIKI_TOPICS)
    return f"{topic} {fact}. {rng.choice(WIKI_EXTRA)}"


# Hand-written pairs. Together with the templated families and endings below
# they give each stage a few hundred prompts, enough tokens per epoch for a
# smooth loss curve.
STAGE1_FIXED = [
    ("merhaba", "merhaba, size nasıl yardım edebilirim?"),
    ("bugün hava nasıl?", "hava bugün güneşli ve sıcak."),
    ("adın ne?", "ben küçük bir dil modeliyim."),
    ("bir renk söyle.", "mavi güzel bir renktir."),
    ("bir hayvan söyle.", "kedi sevimli bir hayvandır."),
    ("iki artı iki kaç?", "iki artı iki dört eder."),
    ("türkiye'nin başkenti neresi?", "türkiye'nin başkenti ankara'dır."),
    ("bir meyve öner.", "elma sağlıklı bir meyvedir."),
    ("günaydın", "günaydın, iyi bir gün dilerim."),
    ("teşekkürler", "rica ederim, her zaman."),
    ("bir sayı söyle.", "yedi güzel bir sayıdır."),
    ("en büyük göl hangisi?", "en büyük göl van gölüdür."),
    ("kısa bir şiir yaz.", "deniz mavi, gök mavi."),
    ("bir şehir söyle.", "izmir güzel bir şehirdir."),
    ("nasılsın?", "iyiyim, teşekkür ederim."),
    ("bir gün söyle.", "pazar dinlenme günüdür."),
]

STAGE2_FIXED = [
    ("insanlar neden uyur?", "uyku vücudun dinlenmesi için gereklidir."),
    ("kitap okumak ne kazandırır?", "kitap okumak bilgi ve hayal gücü kazandırır."),
    ("insanlar neden spor yapar?", "spor yapmak sağlığı korur."),
    ("film ve kitap farkı nedir?", "film görseldir, kitap ise okunur."),
    ("su neden önemlidir?", "su yaşam için gereklidir."),
    ("en uzun nehir hangisi?", "en uzun nehir kızılırmak'tır."),
    ("bana kısa bir hikaye yaz.", "bir zamanlar küçük bir kız varmış."),
    ("yağmur nasıl oluşur?", "bulutlardaki su damlaları düşer."),
    ("neden ders çalışmalıyız?", "ders çalışmak öğrenmeyi sağlar."),
]


PLURAL_NOUNS = ["kedi", "kitap", "ev", "okul", "çiçek", "masa", "kalem", "göz", "yol", "ağaç", "kuş", "deniz",
                "şehir", "bahçe", "köprü", "kapı", "pencere", "elma", "çocuk", "dağ", "göl", "gemi", "bulut", "yıldız",
                "orman", "nehir", "köy", "sokak", "çanta", "defter"]
OPPOSITES = [("büyük", "küçük"), ("sıcak", "soğuk"), ("uzun", "kısa"), ("hızlı", "yavaş"), ("açık", "kapalı"),
             ("genç", "yaşlı"), ("güzel", "çirkin"), ("kolay", "zor"), ("yeni", "eski"), ("iyi", "kötü"),
             ("dolu", "boş"), ("erken", "geç")]


def plural(noun):
    last_vowel = [c for c in noun if c in "aeıioöuü"][-1]
    return noun + ("lar" if last_vowel in "aıou" else "ler")


# Polite endings of one common length: the response then starts at the same
# offset for every phrasing of a question, so the desk-scale model memorizes
# each answer once instead of once per phrasing.
ENDINGS = [" lütfen", " hemen!", " acaba?", " şimdi.", " sence?", " tamam.", " canım.", " dostum", " haydi.",
           " hocam.", " kardeş", " çabuk!", " merak.", " bugün.", " yardım", " ayrıca", " şimdi!", " tamam!",
           " acele!", " bilgi?"]


def with_endings(rng, base):
    """Every base prompt once per ending, shuffled."""
    assert len({len(e) for e in ENDINGS}) == 1
    pairs = [(q + e, r) for q, r in base for e in ENDINGS]
    rng.shuffle(pairs)
    return pairs


def stage1_pairs(rng):
    """General instruction following: small talk and plurals."""
    base = list(STAGE1_FIXED)
    base += [(f"{w} kelimesinin çoğulu nedir?", plural(w)) for w in PLURAL_NOUNS]
    return with_endings(rng, base)


def stage2_pairs(rng):
    """Narrower tasks: encyclopedic facts and opposites."""
    base = list(STAGE2_FIXED)
    base += [(f"{topic} hakkında bilgi ver.", f"{topic} {fact}.") for topic, fact in WIKI_TOPICS]
    base += [(f"{a} kelimesinin zıttı nedir?", f"{a} kelimesinin zıttı {b}.") for a, b in OPPOSITES]
    return with_endings(rng, base)


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=2026)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    write_lines(out / "en.txt", [en_sentence(rng) for _ in range(600)])
    write_lines(out / "tr_news.txt", [tr_sentence(rng) for _ in range(400)])
    # A few overlong web lines exercise the length filter.
    web = [tr_sentence(rng) for _ in range(380)]
    web += [" ".join(tr_sentence(rng) for _ in range(12)) for _ in range(20)]
    rng.shuffle(web)
    write_lines(out / "tr_web.txt", web)
    write_lines(out / "tr_wiki.txt", [wiki_sentence(rng) for _ in range(200)])
    write_lines(out / "instr_stage1.tsv", [f"{i}\t{r}" for i, r in stage1_pairs(rng)])
    write_lines(out / "instr_stage2.tsv", [f"{i}\t{r}" for i, r in stage2_pairs(rng)])


if __name__ == "__main__":
    main()
