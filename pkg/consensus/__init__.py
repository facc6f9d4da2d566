# consensus app
