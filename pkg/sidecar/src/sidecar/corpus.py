"""Embedded training corpus for the serving models.

Both the cloze model and the embedder are estimated from these sentences
at startup. The corpus is deliberately small and thematically clustered
(geography, food, sports, business, science, politics, reviews, weather,
animals, school, music, travel) so that co-occurrence statistics carry a
usable signal while model construction stays instant and offline.
"""

from __future__ import annotations

_CAPITALS: tuple[tuple[str, str], ...] = (
    ("Paris", "France"),
    ("Berlin", "Germany"),
    ("Madrid", "Spain"),
    ("Rome", "Italy"),
    ("London", "England"),
    ("Tokyo", "Japan"),
    ("Ottawa", "Canada"),
    ("Moscow", "Russia"),
    ("Athens", "Greece"),
    ("Lisbon", "Portugal"),
    ("Dublin", "Ireland"),
    ("Vienna", "Austria"),
    ("Cairo", "Egypt"),
    ("Oslo", "Norway"),
)


def _capital_sentences() -> tuple[str, ...]:
    out: list[str] = []
    for city, country in _CAPITALS:
        out.append(f"{city} is the capital of {country}.")
        out.append(f"The capital of {country} is {city}.")
        out.append(f"{city} is the largest city in {country}.")
    return tuple(out)


_GENERAL: tuple[str, ...] = (
    # geography and travel
    "Many tourists visit Paris every summer.",
    "The museum in London was crowded all day.",
    "They flew from Tokyo to Berlin last spring.",
    "The old bridge in Rome crosses the river.",
    "A long train ride took them across Spain.",
    "The mountains in Austria are covered with snow.",
    "Travelers often buy a map of the city.",
    "The harbor in Lisbon was full of small boats.",
    # food
    "A banana is a sweet yellow fruit.",
    "The monkey ate a ripe banana.",
    "She had a banana and an apple for breakfast.",
    "He peeled the banana before eating it.",
    "A banana costs less than a melon at the market.",
    "Bananas and apples are sold at the fruit market.",
    "The baker sold fresh bread every morning.",
    "They cooked rice and vegetables for dinner.",
    "The soup was warm and full of vegetables.",
    "Cheese and bread make a simple lunch.",
    "The apple pie cooled on the kitchen table.",
    "Fresh fruit is part of a healthy breakfast.",
    # sports
    "The team won the game in the final minute.",
    "The coach praised the players after the match.",
    "The season ended with a dramatic championship game.",
    "The tennis player served an ace to win the match.",
    "Fans cheered as the football team scored again.",
    "The runner finished the race ahead of the field.",
    "The players trained hard before the season began.",
    "A late goal decided the football match.",
    "The stadium was full for the championship.",
    "The swimmer broke the national record.",
    # business
    "The company reported strong profits this quarter.",
    "Stock prices rose after the market opened.",
    "The bank approved a loan for the new factory.",
    "Investors worried about the falling market.",
    "The firm hired new workers as trade expanded.",
    "Oil prices fell sharply during the trading day.",
    "The economy grew faster than analysts expected.",
    "A small business opened on the main street.",
    "The merger created the largest company in the industry.",
    "Consumers spent more money during the holiday season.",
    # science and technology
    "Scientists published the results of the experiment.",
    "The new software runs on every modern computer.",
    "Researchers collected data from the space telescope.",
    "The laboratory tested a new source of energy.",
    "Engineers designed a faster computer chip.",
    "The rocket carried a satellite into space.",
    "The study measured how the climate is changing.",
    "A computer model predicted the storm accurately.",
    "The research team mapped the human genome.",
    "Solar energy powers the small research station.",
    # politics and world news
    "The government announced a new education policy.",
    "Voters went to the polls in the national election.",
    "The president met the prime minister for talks.",
    "The parliament debated the new trade treaty.",
    "Leaders from many nations attended the peace summit.",
    "The minister resigned after the vote.",
    "The two countries signed a peace agreement.",
    "Citizens protested against the new tax law.",
    "The senate passed the budget after a long debate.",
    "Diplomats worked through the night on the treaty.",
    # reviews and sentiment
    "The movie was great and the acting was wonderful.",
    "The film was terrible and the plot was boring.",
    "A good book can make a long trip pleasant.",
    "The story was okay but the ending felt weak.",
    "Critics called the new film a great success.",
    "The restaurant was awful and the service was slow.",
    "The concert was wonderful from start to finish.",
    "Her new novel received bad reviews from critics.",
    "The play was good though the theater was small.",
    "The show was bad and many viewers left early.",
    # weather
    "Heavy rain flooded the streets of the town.",
    "The sun rose over the quiet valley.",
    "A cold wind blew across the open field.",
    "Snow fell softly on the village roofs.",
    "The storm passed before the morning came.",
    "Clear skies followed the afternoon rain.",
    # animals
    "The cat slept on the warm windowsill.",
    "A dog barked at the passing car.",
    "Birds sang in the garden at dawn.",
    "The horse galloped across the green field.",
    "A small fish swam in the clear pond.",
    "The farmer fed the cows before sunrise.",
    # school
    "The teacher explained the lesson to the class.",
    "Students studied in the library before the exam.",
    "The school opened a new science laboratory.",
    "Children played in the yard during the break.",
    "The professor gave a lecture on ancient history.",
    "Homework kept the students busy all evening.",
    # music
    "The band played an old song from the radio.",
    "She practiced the piano every afternoon.",
    "The singer recorded a new album in the studio.",
    "Music filled the hall as the orchestra began.",
    "The guitar player wrote a quiet melody.",
    "The choir sang at the festival in the square.",
)


SENTENCES: tuple[str, ...] = _capital_sentences() + _GENERAL
