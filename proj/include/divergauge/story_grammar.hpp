#pragma once

// Multi-genre story grammar backing the bundled toy corpus.
//
// Templates use two constructs:
//   {slot}      a word-list entry, looked up in the genre first, then shared
//   [a|b|c]     an inline alternative (may nest)
// A story is one opening, a run of body sentences drawn from the genre and
// shared pools, and one closing. Expansion is driven by a seeded Rng, so a
// (genre, seed) pair always yields the same story.

#include "divergauge/rng.hpp"

#include <cctype>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace divergauge::fixture {

using WordList = std::vector<std::string_view>;
using SlotTable = std::map<std::string_view, WordList>;

struct Genre {
  std::string_view name;
  std::string_view writing_prompt;
  SlotTable slots;
  WordList openings;
  WordList body;
  WordList closings;
};

inline const SlotTable& shared_slots() {
  static const SlotTable slots{
      {"time",
       {"at dawn", "by nightfall", "before the sun rose", "in the grey hour before morning",
        "late that evening", "at midnight", "the next morning", "three days later",
        "when the bells rang", "after the long winter", "on the third night", "just before noon",
        "as the light was failing", "in the middle of the night", "that same afternoon"}},
      {"feeling",
       {"afraid", "tired", "hopeful", "angry", "curious", "lonely", "calm", "restless", "proud",
        "uneasy", "ashamed", "grateful", "certain", "lost", "strangely happy"}},
      {"said",
       {"said", "whispered", "muttered", "shouted", "replied", "asked", "answered", "admitted",
        "warned", "promised"}},
      {"manner",
       {"slowly", "quietly", "carefully", "at once", "without a word", "with a heavy heart",
        "as fast as they could", "without looking back", "step by step", "in silence"}},
      {"look",
       {"looked at", "stared at", "studied", "watched", "turned toward", "glanced at",
        "could not stop looking at"}},
      {"sound",
       {"a distant bell", "footsteps on the stairs", "the wind in the trees", "a low hum",
        "someone laughing", "rain against the glass", "a dog barking far away",
        "the creak of an old door", "a voice calling a name", "the slow beat of a drum",
        "water dripping somewhere", "a song nobody remembered"}},
      {"color", {"red", "black", "silver", "golden", "pale", "green", "blue", "grey", "white"}},
      {"number", {"two", "three", "seven", "nine", "twelve", "a hundred", "forty", "five"}},
      {"body_part", {"hands", "eyes", "voice", "heart", "shoulders", "breath"}},
      {"memory",
       {"a summer by the river", "the face of an old friend", "the house where they grew up",
        "a promise made long ago", "the last words of a stranger", "a song their mother sang",
        "the smell of bread in the morning", "a letter never sent"}},
      {"weather",
       {"the rain", "the fog", "the snow", "the heat", "the storm", "the wind", "the silence"}},
      {"hour", {"three", "midnight", "one", "four", "two"}},
      {"move", {"walked", "ran", "crept", "hurried", "wandered", "climbed", "stumbled"}},
  };
  return slots;
}

inline const WordList& shared_body() {
  static const WordList body{
      "{time} {hero} felt {feeling} and could not say why.",
      "{hero} {look} the {object} for a long time.",
      "\"We should go,\" {companion} {said}.",
      "Somewhere behind them came {sound}.",
      "{hero} thought of {memory} and of the people waiting at home.",
      "Nobody spoke for a while.",
      "{companion} {said} that it was too late to turn back.",
      "The {adj} {place} was quiet, too quiet.",
      "{hero} {move} {manner} toward the {place}.",
      "It was the {color} {object} that changed everything.",
      "[For a moment|For the first time|Once again] {hero} was {feeling}.",
      "{companion} laughed, but {hero} did not.",
      "There was no going back now.",
      "{hero} counted {number} [steps|doors|shadows|stars|heartbeats] before stopping.",
      "{weather} did not stop until {time}.",
      "[\"Do you trust me?\"|\"Are you ready?\"|\"What now?\"|\"Did you hear that?\"] {companion} {said}.",
      "{hero} kept the {object} close and said nothing.",
      "The air smelled of [smoke|salt|rain|iron|old paper|pine] and something else.",
      "[Her|His|Their] {body_part} were shaking, but {hero} kept going.",
      "{hero} remembered {memory}, and the memory made everything harder.",
      "They rested by the {place} until {time}.",
      "{companion} was {feeling}, and did not hide it.",
      "It had been {number} years since anyone had [seen|found|touched|spoken of] the {object}.",
      "{hero} knew then that {foe} [was watching|was waiting|would come|had never left].",
  };
  return body;
}

inline const std::vector<Genre>& genres() {
  static const std::vector<Genre> all{
      // ------------------------------------------------------------------ fantasy
      {"fantasy",
       "A dragon who has guarded the same treasure for a thousand years finally decides to spend "
       "it.",
       {{"hero",
         {"the young mage", "Elara", "the old knight", "Bram the smith", "the princess",
          "a wandering bard", "the orphan Tomas", "the dragon Vessereth"}},
        {"companion",
         {"the dwarf", "her brother", "the talking raven", "the elf", "an old wizard",
          "the squire", "the river spirit"}},
        {"place",
         {"castle", "forest", "tower", "mountain pass", "ruined temple", "village", "dragon's lair",
          "enchanted lake", "great hall", "market square", "hollow hill"}},
        {"object",
         {"sword", "amulet", "spellbook", "crown", "map", "staff", "ring", "dragon egg", "gold",
          "treasure", "lantern"}},
        {"foe",
         {"the dragon", "the dark lord", "a band of goblins", "the witch queen", "the shadow beast",
          "the king's guard", "the old curse"}},
        {"adj",
         {"ancient", "enchanted", "forgotten", "dark", "misty", "cursed", "glittering", "hidden",
          "silent"}},
        {"magic",
         {"a spell of fire", "a ward of light", "an old charm", "a word of power",
          "a song of binding", "a circle of salt"}},
        {"realm", {"Aldor", "Veyra", "Tarn", "Eldmoor", "the Silver Coast"}}},
       {"Long ago in the kingdom of {realm}, {hero} found a {adj} {object}.",
        "The dragon had slept on the {object} for a thousand years, and {time} it woke up bored.",
        "Nobody in {realm} believed {hero} when [she|he|they] said the {object} could talk.",
        "In the {adj} {place} of {realm} there lived a dragon who was tired of gold."},
       {"{hero} drew the {object} and faced {foe}.",
        "The {adj} {place} had not seen a visitor in a hundred years.",
        "{companion} cast {magic} and the air began to shimmer.",
        "Legends said that {foe} guarded the {object} deep inside the {place}.",
        "{hero} rode north toward the {adj} {place}.",
        "The prophecy spoke of a {object} and a child born in winter.",
        "The dragon carried the {object} down to the {place} and began to spend it.",
        "[A baker|A shepherd|A blacksmith|A tax collector] in {realm} was paid in {color} gold "
        "and fainted.",
        "{companion} asked what a dragon could possibly want to buy.",
        "The answer was a {adj} {object}, and perhaps a friend.",
        "{foe} [rose from the mist|blocked the road|laughed from the tower|sent an army]."},
       {"And so the {object} was returned to the {place}, and peace came to {realm}.",
        "{hero} never spoke of {foe} again.",
        "In the end the dragon kept only one coin, and it was the one that mattered.",
        "The songs of {realm} still tell of the {adj} {object}."}},
      // ------------------------------------------------------------------ science fiction
      {"scifi",
       "You wake up aboard a generation ship and discover you are the only crew member who "
       "remembers Earth.",
       {{"hero",
         {"Captain Reyes", "the engineer", "Dr Okafor", "the navigator", "the android", "Mira",
          "the last pilot", "the cadet"}},
        {"companion",
         {"the ship's computer", "a maintenance drone", "the first officer", "the clone",
          "the doctor", "an alien envoy"}},
        {"place",
         {"bridge", "cargo bay", "airlock", "cryo deck", "station", "colony", "engine room",
          "observation dome", "hydroponics garden", "outer hull"}},
        {"object",
         {"signal", "reactor core", "star map", "data chip", "beacon", "console", "helmet",
          "cryo pod", "message", "logbook"}},
        {"foe",
         {"the swarm", "the rogue AI", "the mutineers", "the corporation", "the void",
          "an unknown vessel", "the failing reactor"}},
        {"adj",
         {"cold", "silent", "flickering", "abandoned", "humming", "sealed", "derelict", "bright",
          "ancient"}},
        {"tech",
         {"the jump drive", "the shields", "the life support", "the long range scanner",
          "the gravity ring", "the comms array"}},
        {"distance",
         {"light years", "parsecs", "generations", "centuries", "million kilometers"}}},
       {"{hero} woke up in a {adj} {place} with frost on [her|his|their] eyelashes.",
        "The ship had been travelling for {number} {distance} when {hero} received the {object}.",
        "Nobody else on the ship remembered Earth, but {hero} did.",
        "Alarms filled the {place} as {tech} went dark."},
       {"{companion} reported that {tech} was failing.",
        "The {object} pulsed with a {color} light.",
        "{hero} sealed the {place} and checked the oxygen.",
        "Outside the window the stars did not move for {number} hours.",
        "{foe} [was closing in|had found them|was still out there|answered the signal].",
        "{hero} told {companion} about oceans and rain and blue skies.",
        "The logs said the ship left Earth {number} {distance} ago.",
        "{companion} asked what a tree was, and {hero} tried to explain.",
        "{hero} rerouted power from {tech} to the {place}.",
        "The {adj} {place} hummed as the {object} came back online.",
        "A voice on the comms said it had been waiting for them."},
       {"Far ahead, a blue world turned slowly in the dark.",
        "{hero} wrote everything down in the {object}, so that someone would remember.",
        "The ship kept going, and so did {hero}.",
        "When the others woke, {hero} told them about Earth."}},
      // ------------------------------------------------------------------ mystery
      {"mystery",
       "A detective receives a letter confessing to a murder that has not happened yet.",
       {{"hero",
         {"Inspector Hale", "the detective", "Miss Grey", "the young constable", "Father Brennan",
          "the journalist", "Sergeant Moss"}},
        {"companion",
         {"the housekeeper", "the widow", "the butler", "her assistant", "the doctor",
          "the night porter", "the victim's brother"}},
        {"place",
         {"library", "study", "train station", "manor", "hotel lobby", "alley", "police station",
          "cellar", "garden", "pawn shop"}},
        {"object",
         {"letter", "revolver", "pocket watch", "key", "photograph", "teacup", "ledger",
          "footprint", "glove", "will"}},
        {"foe",
         {"the killer", "the blackmailer", "someone in the house", "the man in the grey coat",
          "the forger", "an old enemy"}},
        {"adj",
         {"locked", "dusty", "dim", "empty", "rain soaked", "cluttered", "narrow", "elegant",
          "shabby"}},
        {"clue",
         {"a smear of ink", "a missing button", "a train ticket", "a burnt match",
          "the smell of lilies", "a torn page", "mud on the carpet"}},
        {"hour", {"nine", "ten", "eleven", "midnight", "half past four", "six"}}},
       {"The {object} arrived on a Tuesday, and it confessed to a murder that had not happened yet.",
        "{hero} had seen many crimes, but never one announced in advance.",
        "The body was found in the {adj} {place} at {hour} o'clock.",
        "It began with a {object} and {clue}."},
       {"{hero} examined the {object} and noticed {clue}.",
        "{companion} swore [she|he|they] had been in the {place} all evening.",
        "The clock in the {place} had stopped at {hour}.",
        "{hero} asked who else had a key to the {adj} {place}.",
        "Nobody could explain {clue}.",
        "{foe} [had left no trace|was still in the house|had signed the letter|knew too much].",
        "The {object} was not where the maid had left it.",
        "{companion} {said} that the victim had enemies.",
        "{hero} wrote the names in a small notebook and crossed out {number} of them.",
        "The letter said the crime would happen at {hour} o'clock.",
        "{hero} waited in the {place} and watched the door."},
       {"By {hour} o'clock the case was closed, and {hero} went home to sleep.",
        "In the end the {object} told the whole story.",
        "{foe} was arrested on the morning train, still holding the {object}.",
        "{hero} burned the letter, but kept {clue} as a reminder."}},
      // ------------------------------------------------------------------ western
      {"western",
       "The sheriff of a dying frontier town has one week to find water before everyone leaves.",
       {{"hero",
         {"the sheriff", "Jesse Cole", "the preacher", "the widow Mae", "a drifter", "the deputy",
          "old Ezra"}},
        {"companion",
         {"the blacksmith", "the saloon keeper", "her horse", "the stagecoach driver",
          "the kid from the ranch", "the doctor"}},
        {"place",
         {"saloon", "canyon", "ranch", "jailhouse", "dry creek", "main street", "mesa",
          "railroad camp", "well", "church"}},
        {"object",
         {"badge", "rifle", "water barrel", "deed", "wanted poster", "canteen", "saddle",
          "shovel", "silver dollar", "map"}},
        {"foe",
         {"the Dalton gang", "the railroad men", "the drought", "the cattle baron",
          "a hired gun", "the dust storm"}},
        {"adj",
         {"dusty", "dry", "sunbaked", "lonely", "crooked", "empty", "burning", "wide", "windswept"}},
        {"critter",
         {"a coyote", "a hawk", "a rattlesnake", "the cattle", "a lame mule", "the buzzards"}}},
       {"The town of Dry Wells had {number} days of water left when {hero} pinned on the {object}.",
        "{hero} rode into town at noon, and nobody came out to meet [her|him|them].",
        "It had not rained in the valley for {number} months.",
        "The {adj} {place} was the last thing standing after {foe} came through."},
       {"{hero} dug another hole in the {adj} {place}, but the ground was dry.",
        "{companion} {said} that folks were packing their wagons.",
        "{critter} watched from the ridge as {hero} {move} past.",
        "{foe} [rode in at sundown|owned the only spring|wanted the town empty|was coming back].",
        "{hero} checked the {object} and looked at the sky.",
        "The wind pushed dust down {adj} main street.",
        "Under the {place} there was a sound like running water.",
        "{companion} brought the {object} and a lantern.",
        "{hero} spat in the dust and kept digging.",
        "The {number} families left in town gathered by the {place}."},
       {"When the water came up cold and clear, the whole town came to see it.",
        "{hero} hung the {object} on a nail and rode out at dawn.",
        "Dry Wells lived another year, and then another.",
        "{foe} never came back to the valley."}},
      // ------------------------------------------------------------------ horror
      {"horror",
       "Every night at 3 AM your house adds a new room, and tonight you hear someone inside it.",
       {{"hero",
         {"Anna", "the night nurse", "the new tenant", "the boy", "Mr Clarke", "the caretaker",
          "the babysitter"}},
        {"companion",
         {"her sister", "the neighbor", "the dog", "the landlord", "a priest", "the voice on the "
                                                                                 "phone"}},
        {"place",
         {"hallway", "basement", "attic", "nursery", "new room", "staircase", "kitchen",
          "bathroom", "crawl space", "bedroom"}},
        {"object",
         {"door", "mirror", "doll", "candle", "photograph", "music box", "key", "rocking chair",
          "wallpaper", "phone"}},
        {"foe",
         {"the thing in the walls", "the tall man", "the other family", "whatever lived below",
          "the shadow", "the voice"}},
        {"adj",
         {"cold", "narrow", "dark", "damp", "rotting", "silent", "crooked", "endless", "wrong"}},
        {"horror_sound",
         {"scratching behind the wallpaper", "a child humming", "slow knocking",
          "breathing in the dark", "footsteps that stopped when she stopped",
          "the music box playing by itself"}}},
       {"At {hour} o'clock every night the house grew a new {place}.",
        "The first time {hero} heard {horror_sound}, it was coming from the {place}.",
        "The {object} had not been there yesterday.",
        "{hero} counted the doors again, and there was one more than before."},
       {"{hero} pressed an ear to the {object} and heard {horror_sound}.",
        "The {adj} {place} smelled of wet earth.",
        "{companion} refused to come upstairs after dark.",
        "{foe} [was inside the new room|knew her name|had always been there|was getting closer].",
        "The lights in the {place} went out one by one.",
        "{hero} locked the {object}, but it was open again in the morning.",
        "Something had moved the {object} into the {place}.",
        "{hero} {move} down the {adj} {place} with a candle.",
        "On the wall someone had written {hero}'s name {number} times.",
        "{companion} {said} that nobody had lived in the house for years."},
       {"In the morning the {place} was gone, and so was {companion}.",
        "{hero} moved out that week, but the house kept growing.",
        "The {object} is still in the {place}, and it is still waiting.",
        "Sometimes, at {hour} o'clock, {hero} still hears {horror_sound}."}},
      // ------------------------------------------------------------------ romance
      {"romance",
       "Two rival bakers on the same street are forced to share an oven for one month.",
       {{"hero",
         {"Clara", "Luca", "the baker", "the florist", "Sam", "the new neighbor", "Nina"}},
        {"companion",
         {"her grandmother", "his best friend", "the landlord", "the cat", "the regular customer",
          "her rival"}},
        {"place",
         {"bakery", "cafe", "flower shop", "train platform", "rooftop", "park bench", "kitchen",
          "bookshop", "harbor", "festival"}},
        {"object",
         {"oven", "recipe", "letter", "umbrella", "cake", "scarf", "ring", "sourdough starter",
          "rose", "notebook"}},
        {"foe",
         {"her pride", "the health inspector", "the landlord", "an old flame", "the bad timing",
          "his stubbornness"}},
        {"adj",
         {"warm", "crowded", "tiny", "sunny", "quiet", "cozy", "rainy", "bright", "little"}},
        {"pastry",
         {"croissants", "cinnamon rolls", "rye bread", "lemon tarts", "apple pie", "baguettes",
          "honey cake"}}},
       {"{hero} had hated the baker across the street for {number} years.",
        "The {object} broke on a Monday, and by Tuesday {hero} had to share one.",
        "Every morning {hero} baked {pastry} in the {adj} {place} before the sun rose.",
        "It started with a borrowed {object} and an argument about {pastry}."},
       {"{hero} burned the {pastry} and blamed {companion}.",
        "They argued about the {object} until the {place} smelled of smoke.",
        "{companion} {said} that they were clearly in love.",
        "{foe} [got in the way again|made everything harder|was not the real problem].",
        "{hero} left a {object} on the counter without a note.",
        "The {adj} {place} felt different when they were both in it.",
        "By the second week they were finishing each other's {pastry}.",
        "{hero} laughed for the first time in {number} months.",
        "Their hands touched over the {object}, and neither of them moved.",
        "{companion} winked and left them alone in the {place}."},
       {"At the end of the month they painted one sign with both their names.",
        "{hero} kept the {object}, and the baker kept {hero}.",
        "The street still smells of {pastry} every morning.",
        "They never did agree on the {object}, and they never stopped arguing about it."}},
      // ------------------------------------------------------------------ sea adventure
      {"sea",
       "A lighthouse keeper finds a message in a bottle addressed to someone who died a century "
       "ago.",
       {{"hero",
         {"the lighthouse keeper", "Captain Morrow", "the cabin boy", "old Tobias", "the first mate",
          "the fisherman's daughter", "Isla"}},
        {"companion",
         {"the parrot", "the cook", "the ship's cat", "the navigator", "the harbor master",
          "a drowned sailor"}},
        {"place",
         {"lighthouse", "harbor", "reef", "deck", "cove", "island", "shipwreck", "tide pool",
          "cliff", "crow's nest"}},
        {"object",
         {"bottle", "compass", "message", "sea chart", "anchor", "telescope", "lantern",
          "ship in a bottle", "pearl", "oar"}},
        {"foe",
         {"the storm", "the pirates", "the kraken", "the fog", "the rising tide", "the harbor "
                                                                                 "master's men"}},
        {"adj",
         {"salty", "stormy", "foggy", "rocky", "moonlit", "wrecked", "windswept", "green", "deep"}},
        {"sea_sound",
         {"the gulls crying", "waves breaking on the rocks", "a foghorn", "the creak of rigging",
          "the bell buoy ringing"}}},
       {"The {object} washed up below the {place} on a {adj} morning.",
        "{hero} had kept the {place} for {number} years and never found anything like it.",
        "The letter inside was addressed to a sailor who had drowned a hundred years before.",
        "Out past the {adj} {place}, {hero} heard {sea_sound}."},
       {"{hero} climbed the {place} and lit the {object}.",
        "{foe} [rolled in from the west|was rising fast|swallowed the last boat|would not wait].",
        "{companion} {said} that the sea always gives back what it takes.",
        "The {object} pointed north, toward the {adj} {place}.",
        "The ink on the {object} had faded to the color of seawater.",
        "{hero} rowed out to the {place} {manner}.",
        "Below the waves something {color} was shining.",
        "In the church records {hero} found the name of the drowned sailor.",
        "{hero} read the letter aloud to the empty {place}.",
        "Over the water came {sea_sound}."},
       {"{hero} threw the {object} back into the sea, with a new letter inside.",
        "On quiet nights the light of the {place} still turns for the drowned.",
        "By morning the sea was calm, and the {object} was gone.",
        "{hero} finally understood why the {object} had come to [her|him|them]."}},
      // ------------------------------------------------------------------ fable
      {"fable",
       "A fox and a crow make a bargain that neither of them intends to keep.",
       {{"hero",
         {"the fox", "the crow", "the tortoise", "the clever mouse", "the old bear", "the hare",
          "the little goat"}},
        {"companion",
         {"the owl", "the wolf", "the lion", "the ant", "the farmer's dog", "the frog"}},
        {"place",
         {"meadow", "river bank", "old oak", "barnyard", "hill", "pond", "orchard", "hollow log",
          "wheat field", "stone bridge"}},
        {"object",
         {"cheese", "apple", "acorn", "bell", "golden feather", "basket of grain", "cherry",
          "bone", "honeycomb", "river stone"}},
        {"foe",
         {"the wolf", "the hunter", "the winter", "greed", "the farmer", "the flood"}},
        {"adj",
         {"green", "sunny", "wide", "quiet", "muddy", "golden", "windy", "tall", "shady"}},
        {"moral",
         {"a promise is only as good as the one who keeps it",
          "slow and steady wins the race", "pride comes before a fall",
          "the greedy lose what they have", "kindness is never wasted",
          "those who flatter want something"}}},
       {"Once upon a time, {hero} and {companion} lived near the {adj} {place}.",
        "{hero} had a {object}, and {companion} wanted it very much.",
        "One {adj} morning {hero} made a bargain with {companion}.",
        "In the {adj} {place} there was only one {object}, and two hungry animals."},
       {"\"I will give you the {object} tomorrow,\" {hero} {said}.",
        "{companion} flattered {hero} and praised [her|his|their] voice.",
        "{hero} hid the {object} under the {place}.",
        "{foe} [came over the hill|was waiting by the river|arrived with the first frost].",
        "{companion} pretended to sleep but watched the {object}.",
        "Neither of them meant to keep the bargain.",
        "The {object} fell into the {place}, and both of them stared at it.",
        "{hero} {move} to the {place} and back {number} times.",
        "{companion} laughed and said that a bargain is a bargain."},
       {"And the moral of the story is that {moral}.",
        "In the end neither of them had the {object}, and {foe} had it instead.",
        "So {hero} learned that {moral}.",
        "{hero} and {companion} never made another bargain."}},
      // ------------------------------------------------------------------ war
      {"war",
       "On the last night of the war, two soldiers from opposite sides share a single foxhole.",
       {{"hero",
         {"the corporal", "Private Hayes", "the medic", "the young soldier", "Lieutenant Weiss",
          "the radio operator", "the old sergeant"}},
        {"companion",
         {"the enemy soldier", "the chaplain", "his squad", "the messenger", "the sniper",
          "a farm boy from the other side"}},
        {"place",
         {"trench", "foxhole", "bunker", "ruined church", "field hospital", "bridge", "forest",
          "farmhouse", "supply road", "river crossing"}},
        {"object",
         {"rifle", "letter", "ration tin", "photograph", "helmet", "radio", "cigarette",
          "dog tags", "canteen", "white flag"}},
        {"foe",
         {"the shelling", "the enemy line", "the cold", "the order to advance", "the artillery",
          "the sniper"}},
        {"adj",
         {"muddy", "shattered", "frozen", "smoking", "silent", "burned", "narrow", "flooded",
          "grey"}},
        {"rumor",
         {"the war would be over by morning", "the generals were signing papers",
          "nobody would fire after midnight", "the bridge would be blown at dawn"}}},
       {"On the last night of the war, {hero} slid into a {adj} {place} and found it occupied.",
        "Rumor said that {rumor}, but nobody believed it.",
        "{hero} had carried the same {object} for {number} months.",
        "The guns stopped at midnight, and {hero} did not know what to do with the silence."},
       {"{companion} offered {hero} a {object} without a word.",
        "{foe} [began again at dawn|lit up the sky|never came|fell silent at last].",
        "They shared the {object} and did not speak the same language.",
        "{hero} showed {companion} a {object} from home.",
        "The {adj} {place} filled with water and they moved to higher ground.",
        "{companion} {said} that {rumor}.",
        "Neither of them raised a rifle.",
        "{hero} thought of {memory} and wondered if it was still there.",
        "In the distance a [flare|church bell|whistle|truck] broke the silence."},
       {"In the morning they climbed out of the {place} and walked in different directions.",
        "{hero} kept the {object} for the rest of [her|his|their] life.",
        "When the war ended, {hero} wrote a letter to {companion}, and years later an answer came.",
        "Nobody ever asked {hero} about that night, and [she|he|they] never told."}},
      // ------------------------------------------------------------------ post-apocalyptic
      {"wasteland",
       "Years after the cities fell, a child finds a working radio and hears a voice.",
       {{"hero",
         {"the scavenger", "Kit", "the child", "old Mara", "the wanderer", "the mechanic",
          "the last teacher"}},
        {"companion",
         {"the dog", "her grandfather", "the trader", "a broken robot", "the stranger",
          "the twins"}},
        {"place",
         {"ruined city", "highway", "shelter", "gas station", "supermarket", "rooftop garden",
          "subway tunnel", "radio tower", "wasteland", "bunker"}},
        {"object",
         {"radio", "water filter", "battery", "map", "seed packet", "gas mask", "crossbow",
          "solar panel", "tin of peaches", "book"}},
        {"foe",
         {"the raiders", "the dust", "the sickness", "the hunger", "the machines", "the long "
                                                                                     "winter"}},
        {"adj",
         {"burned out", "rusted", "empty", "overgrown", "flooded", "broken", "silent", "grey",
          "half buried"}},
        {"broadcast",
         {"a woman counting numbers", "an old song", "a voice asking if anyone was there",
          "a weather report for a city that no longer existed", "children laughing"}}},
       {"Years after the cities fell, {hero} found a {object} in a {adj} {place}.",
        "{hero} turned the dial and heard {broadcast}.",
        "Nobody had heard a voice on the radio for {number} years.",
        "The {adj} {place} had been home to {hero} since the sickness."},
       {"{hero} traded a {object} for a battery and a little water.",
        "{foe} [came in the night|took the last shelter|were moving east|left nothing behind].",
        "{companion} {said} that the voice was a trap.",
        "Through the static came {broadcast}.",
        "{hero} climbed the {adj} {place} to get a better signal.",
        "They followed the {object} toward the {place}.",
        "Weeds grew through the cracks of the {adj} {place}.",
        "{hero} buried a {object} by the road as a marker.",
        "The nights were colder now, and {companion} coughed in the dark."},
       {"At the end of the road there was a light, and a voice, and people.",
        "{hero} answered the voice, and for the first time in years someone answered back.",
        "They planted the seeds by the {place}, and something grew.",
        "The {object} went silent, but {hero} kept walking toward the sound."}},
  };
  return all;
}

namespace detail {

inline std::size_t matching_bracket(std::string_view t, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < t.size(); ++i) {
    if (t[i] == '[') ++depth;
    if (t[i] == ']' && --depth == 0) return i;
  }
  throw std::logic_error("story grammar: unbalanced '[' in template");
}

inline std::vector<std::string_view> split_alternatives(std::string_view body) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '[') ++depth;
    if (body[i] == ']') --depth;
    if (body[i] == '|' && depth == 0) {
      out.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(body.substr(start));
  return out;
}

}  // namespace detail

inline std::string_view pick(const WordList& list, Rng& rng) { return list[rng.below(list.size())]; }

inline std::string expand(std::string_view tmpl, const Genre& g, Rng& rng, int depth = 0) {
  if (depth > 16) throw std::logic_error("story grammar: expansion too deep");
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{') {
      const std::size_t close = tmpl.find('}', i);
      const std::string_view name = tmpl.substr(i + 1, close - i - 1);
      const WordList* list = nullptr;
      if (auto it = g.slots.find(name); it != g.slots.end()) list = &it->second;
      else if (auto jt = shared_slots().find(name); jt != shared_slots().end()) list = &jt->second;
      else throw std::logic_error("story grammar: unknown slot " + std::string(name));
      out += expand(pick(*list, rng), g, rng, depth + 1);
      i = close;
    } else if (c == '[') {
      const std::size_t close = detail::matching_bracket(tmpl, i);
      const auto alts = detail::split_alternatives(tmpl.substr(i + 1, close - i - 1));
      out += expand(alts[rng.below(alts.size())], g, rng, depth + 1);
      i = close;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline std::string capitalize(std::string s) {
  for (char& c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    }
    if (c != '"' && c != '\'') break;
  }
  return s;
}

// One story: opening, 6-12 body sentences (genre pool twice as likely as the
// shared pool), closing.
inline std::string generate_story(const Genre& g, Rng& rng) {
  std::string story = capitalize(expand(pick(g.openings, rng), g, rng));
  const std::size_t body = 6 + rng.below(7);
  for (std::size_t s = 0; s < body; ++s) {
    const WordList& pool = rng.below(3) < 2 ? g.body : shared_body();
    story += ' ';
    story += capitalize(expand(pick(pool, rng), g, rng));
  }
  story += ' ';
  story += capitalize(expand(pick(g.closings, rng), g, rng));
  return story;
}

}  // namespace divergauge::fixture
