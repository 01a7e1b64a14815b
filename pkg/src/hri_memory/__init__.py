"""Self-supervised collection of labeled faces and voices by a robot that
plays a multiparty game, using a spatial working memory to attach
identities to what it sees and hears."""

__version__ = "0.1.0"
